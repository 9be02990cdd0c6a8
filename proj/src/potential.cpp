#include "dathermo/potential.hpp"

#include "dathermo/random.hpp"
#include "dathermo/torus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <sstream>

namespace dathermo {

namespace {

enum Op : int {
  kConst,
  kVar,
  kNeg,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kPow,
  kSin,
  kCos,
  kExp,
  kLog,
  kAbs,
  kSqrt,
  kTri,
  kDist
};

using Code = std::vector<Expression::Instr>;

double run(const Code& code, const std::vector<Vecd>& points, const Vecd& x) {
  double stack[64];
  int sp = 0;
  for (const auto& in : code) {
    switch (in.op) {
      case kConst: stack[sp++] = in.value; break;
      case kVar: stack[sp++] = x(in.index); break;
      case kNeg: stack[sp - 1] = -stack[sp - 1]; break;
      case kAdd: --sp; stack[sp - 1] += stack[sp]; break;
      case kSub: --sp; stack[sp - 1] -= stack[sp]; break;
      case kMul: --sp; stack[sp - 1] *= stack[sp]; break;
      case kDiv: --sp; stack[sp - 1] /= stack[sp]; break;
      case kPow: --sp; stack[sp - 1] = std::pow(stack[sp - 1], stack[sp]); break;
      case kSin: stack[sp - 1] = std::sin(stack[sp - 1]); break;
      case kCos: stack[sp - 1] = std::cos(stack[sp - 1]); break;
      case kExp: stack[sp - 1] = std::exp(stack[sp - 1]); break;
      case kLog: stack[sp - 1] = std::log(stack[sp - 1]); break;
      case kAbs: stack[sp - 1] = std::abs(stack[sp - 1]); break;
      case kSqrt: stack[sp - 1] = std::sqrt(stack[sp - 1]); break;
      case kTri: stack[sp - 1] = std::abs(stack[sp - 1] - std::nearbyint(stack[sp - 1])); break;
      case kDist: stack[sp++] = flat_distance<double>(x, points[static_cast<std::size_t>(in.index)]); break;
      default: break;
    }
  }
  return stack[0];
}

class Parser {
 public:
  Parser(const std::string& text, int dim, std::vector<Vecd>& points) : s_(text), dim_(dim), points_(points) {}

  Code parse() {
    Code code;
    expr(code);
    skip();
    if (pos_ != s_.size()) fail("unexpected character");
    return code;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream os;
    os << "expression: " << what << " at position " << pos_ << " in \"" << s_ << "\"";
    throw std::invalid_argument(os.str());
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  void expr(Code& code) {
    term(code);
    for (;;) {
      if (accept('+')) {
        term(code);
        code.push_back({kAdd, 0, 0});
      } else if (accept('-')) {
        term(code);
        code.push_back({kSub, 0, 0});
      } else {
        return;
      }
    }
  }
  void term(Code& code) {
    unary(code);
    for (;;) {
      if (accept('*')) {
        unary(code);
        code.push_back({kMul, 0, 0});
      } else if (accept('/')) {
        unary(code);
        code.push_back({kDiv, 0, 0});
      } else {
        return;
      }
    }
  }
  void unary(Code& code) {
    if (accept('-')) {
      unary(code);
      code.push_back({kNeg, 0, 0});
    } else if (accept('+')) {
      unary(code);
    } else {
      power(code);
    }
  }
  void power(Code& code) {
    primary(code);
    if (accept('^')) {
      unary(code);
      code.push_back({kPow, 0, 0});
    }
  }
  void primary(Code& code) {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += static_cast<std::size_t>(end - begin);
      code.push_back({kConst, v, 0});
      return;
    }
    if (c == '(') {
      ++pos_;
      expr(code);
      expect(')');
      return;
    }
    if (!std::isalpha(static_cast<unsigned char>(c))) fail("unexpected character");
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    std::string name = s_.substr(start, pos_ - start);
    if (name == "pi") {
      code.push_back({kConst, std::numbers::pi, 0});
      return;
    }
    if (name.size() >= 2 && name[0] == 'x' && std::all_of(name.begin() + 1, name.end(), ::isdigit)) {
      int i = std::stoi(name.substr(1));
      if (i < 1 || i > dim_) {
        pos_ = start;
        fail("coordinate " + name + " out of range");
      }
      code.push_back({kVar, 0, i - 1});
      return;
    }
    static const std::pair<const char*, int> funcs[] = {{"sin", kSin}, {"cos", kCos}, {"exp", kExp},
                                                        {"log", kLog}, {"abs", kAbs}, {"sqrt", kSqrt},
                                                        {"tri", kTri}};
    for (const auto& [fname, op] : funcs) {
      if (name == fname) {
        expect('(');
        expr(code);
        expect(')');
        code.push_back({op, 0, 0});
        return;
      }
    }
    if (name == "dist") {
      expect('(');
      Vecd p(dim_);
      for (int i = 0; i < dim_; ++i) {
        if (i > 0) expect(',');
        Code arg;
        expr(arg);
        if (std::any_of(arg.begin(), arg.end(), [](const auto& in) { return in.op == kVar || in.op == kDist; }))
          fail("dist() arguments must be constants");
        p(i) = run(arg, points_, Vecd::Zero(dim_));
      }
      expect(')');
      points_.push_back(reduce_coords<double>(p));
      code.push_back({kDist, 0, static_cast<int>(points_.size() - 1)});
      return;
    }
    pos_ = start;
    fail("unknown identifier '" + name + "'");
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  int dim_;
  std::vector<Vecd>& points_;
};

int stack_depth(const Code& code) {
  int sp = 0, mx = 0;
  for (const auto& in : code) {
    switch (in.op) {
      case kConst:
      case kVar:
      case kDist: ++sp; break;
      case kAdd:
      case kSub:
      case kMul:
      case kDiv:
      case kPow: --sp; break;
      default: break;
    }
    mx = std::max(mx, sp);
  }
  return mx;
}

/// Coordinate pattern search from x, keeping points within `radius` of
/// `center` when radius > 0.
std::pair<double, Vecd> refine(const Potential::Eval& f, Vecd x, double fx, double step, bool maximize,
                               const Vecd* center, double radius) {
  const int d = static_cast<int>(x.size());
  const double sign = maximize ? 1.0 : -1.0;
  double best = sign * fx;
  while (step > 1e-10) {
    bool improved = false;
    for (int i = 0; i < d; ++i) {
      for (double dir : {1.0, -1.0}) {
        Vecd y = x;
        y(i) += dir * step;
        y = reduce_coords<double>(y);
        if (center) {
          const Vecd off = wrap<double>(y - *center);
          const double dist = off.norm();
          if (dist > radius) y = reduce_coords<double>(Vecd(*center + off * (radius / dist)));
        }
        double v = sign * f(y);
        if (v > best) {
          best = v;
          x = y;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return {sign * best, x};
}

struct Candidate {
  double score;
  Vecd x;
  bool operator<(const Candidate& o) const { return score > o.score; }  // min-heap on score
};

}  // namespace

Expression Expression::parse(const std::string& text, int dim) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("expression: bad dimension");
  Expression e;
  e.text_ = text;
  e.dim_ = dim;
  Parser p(text, dim, e.points_);
  e.code_ = p.parse();
  e.max_stack_ = stack_depth(e.code_);
  if (e.max_stack_ > 64) throw std::invalid_argument("expression: nesting too deep");
  return e;
}

double Expression::operator()(const Vecd& x) const { return run(code_, points_, x); }

bool Expression::is_constant() const {
  return std::none_of(code_.begin(), code_.end(), [](const Instr& in) { return in.op == kVar || in.op == kDist; });
}

Extremum global_extremum(const Potential::Eval& f, int dim, bool maximize, double alpha, double seminorm, long budget,
                         int refine_starts) {
  int m = std::max(2, static_cast<int>(std::floor(std::pow(static_cast<double>(budget), 1.0 / dim) + 1e-9)));
  const double h = 1.0 / m;
  const double sign = maximize ? 1.0 : -1.0;
  std::priority_queue<Candidate> keep;
  long total = 1;
  for (int i = 0; i < dim; ++i) total *= m;
  Vecd x(dim);
  for (long idx = 0; idx < total; ++idx) {
    long r = idx;
    for (int i = 0; i < dim; ++i) {
      x(i) = (static_cast<double>(r % m) + 0.5) * h;
      r /= m;
    }
    double v = sign * f(x);
    if (static_cast<int>(keep.size()) < refine_starts) {
      keep.push({v, x});
    } else if (v > keep.top().score) {
      keep.pop();
      keep.push({v, x});
    }
  }
  Extremum best;
  best.value = -std::numeric_limits<double>::infinity();
  while (!keep.empty()) {
    Candidate c = keep.top();
    keep.pop();
    auto [val, where] = refine(f, c.x, sign * c.score, h / 2, maximize, nullptr, 0.0);
    if (sign * val > best.value) {
      best.value = sign * val;
      best.where = where;
    }
  }
  best.value *= sign;
  best.slack = seminorm * std::pow(h * std::sqrt(static_cast<double>(dim)) / 2, alpha);
  return best;
}

Extremum ball_extremum(const Potential::Eval& f, const Vecd& q, double rho, bool maximize, double alpha,
                       double seminorm, long budget, int refine_starts) {
  const int dim = static_cast<int>(q.size());
  int m = std::max(2, static_cast<int>(std::floor(std::pow(static_cast<double>(budget), 1.0 / dim) + 1e-9)));
  const double h = 2 * rho / m;
  const double sign = maximize ? 1.0 : -1.0;
  std::priority_queue<Candidate> keep;
  keep.push({sign * f(q), q});
  long total = 1;
  for (int i = 0; i < dim; ++i) total *= m;
  Vecd off(dim);
  for (long idx = 0; idx < total; ++idx) {
    long r = idx;
    for (int i = 0; i < dim; ++i) {
      off(i) = -rho + (static_cast<double>(r % m) + 0.5) * h;
      r /= m;
    }
    if (off.norm() > rho) continue;
    Vecd x = reduce_coords<double>(q + off);
    double v = sign * f(x);
    if (static_cast<int>(keep.size()) < refine_starts) {
      keep.push({v, x});
    } else if (v > keep.top().score) {
      keep.pop();
      keep.push({v, x});
    }
  }
  Extremum best;
  best.value = -std::numeric_limits<double>::infinity();
  while (!keep.empty()) {
    Candidate c = keep.top();
    keep.pop();
    auto [val, where] = refine(f, c.x, sign * c.score, h / 2, maximize, &q, rho);
    if (sign * val > best.value) {
      best.value = sign * val;
      best.where = where;
    }
  }
  best.value *= sign;
  best.slack = seminorm * std::pow(h * std::sqrt(static_cast<double>(dim)) / 2, alpha);
  return best;
}

double holder_seminorm(const Potential::Eval& phi, int dim, double alpha, int n_pairs, std::uint64_t seed) {
  if (!(alpha > 0 && alpha <= 1)) throw std::invalid_argument("holder_seminorm: alpha must lie in (0,1]");
  Rng rng(seed);
  double best = 0;
  for (int i = 0; i < n_pairs; ++i) {
    Vecd x = uniform_point(rng, dim);
    Vecd dir(dim);
    double r;
    switch (i % 4) {
      case 0: {  // uniform pair
        Vecd y = uniform_point(rng, dim);
        dir = wrap<double>(y - x);
        r = dir.norm();
        if (r == 0) continue;
        dir /= r;
        break;
      }
      case 1: {  // coordinate axis, stratified scale
        dir = Vecd::Zero(dim);
        dir(static_cast<int>(rng() % static_cast<std::uint64_t>(dim))) = 1.0;
        r = std::ldexp(1.0, -static_cast<int>(1 + (i / 4) % 24));
        break;
      }
      default: {  // random direction, stratified scale
        for (int k = 0; k < dim; ++k) dir(k) = standard_normal(rng);
        dir.normalize();
        r = std::ldexp(0.5 + 0.5 * uniform01(rng), -static_cast<int>(1 + (i / 4) % 24));
        break;
      }
    }
    Vecd y = reduce_coords<double>(x + r * dir);
    double dxy = flat_distance<double>(x, y);
    if (dxy <= 0) continue;
    double q = std::abs(phi(x) - phi(y)) / std::pow(dxy, alpha);
    if (std::isfinite(q)) best = std::max(best, q);
  }
  return best;
}

double UnstableCocycle::sum(const std::vector<Vecd>& orb, std::size_t n) const {
  if (n == 0) return 0.0;
  Vecd v = estimate_unstable_direction(map, orb[0], n_back);
  double s = 0;
  for (std::size_t k = 0; k < n; ++k) {
    Vecd w = map.jacobian(orb[k]) * v;
    double nw = w.norm();
    s -= std::log(nw);
    v = w / nw;
  }
  return s;
}

namespace {

PotentialStats compute_stats(const Potential::Eval& f, int dim, double alpha, const StatsOptions& o) {
  PotentialStats st;
  st.alpha = alpha;
  st.seminorm = holder_seminorm(f, dim, alpha, o.seminorm_pairs, o.seed);
  Vecd q = o.q.size() == dim ? o.q : Vecd::Zero(dim);
  Extremum hi = global_extremum(f, dim, true, alpha, st.seminorm, o.grid_budget, o.refine_starts);
  Extremum lo = global_extremum(f, dim, false, alpha, st.seminorm, o.grid_budget, o.refine_starts);
  Extremum ball = ball_extremum(f, q, o.rho, true, alpha, st.seminorm, std::max(64L, o.grid_budget / 8), o.refine_starts);
  st.sup = std::max(hi.value, ball.value);
  st.inf = std::min(lo.value, ball.value);
  st.sup_ball = ball.value;
  st.sup_slack = hi.slack;
  st.inf_slack = lo.slack;
  st.sup_ball_slack = ball.slack;
  return st;
}

}  // namespace

Potential Potential::from_expression(const std::string& expr, int dim, double alpha, const StatsOptions& opts) {
  if (!(alpha > 0 && alpha <= 1)) throw std::invalid_argument("potential: alpha must lie in (0,1]");
  auto e = std::make_shared<Expression>(Expression::parse(expr, dim));
  if (e->is_constant()) {
    Potential p = constant((*e)(Vecd::Zero(dim)), dim);
    p.label_ = expr;
    p.stats_.alpha = alpha;
    return p;
  }
  return from_function([e](const Vecd& x) { return (*e)(x); }, dim, alpha, opts, expr);
}

Potential Potential::from_function(Eval f, int dim, double alpha, const StatsOptions& opts, std::string label) {
  if (!(alpha > 0 && alpha <= 1)) throw std::invalid_argument("potential: alpha must lie in (0,1]");
  Potential p;
  p.eval_ = std::move(f);
  p.dim_ = dim;
  p.label_ = std::move(label);
  p.stats_ = compute_stats(p.eval_, dim, alpha, opts);
  return p;
}

Potential Potential::constant(double c, int dim) {
  Potential p;
  p.eval_ = [c](const Vecd&) { return c; };
  p.dim_ = dim;
  std::ostringstream os;
  os.precision(17);
  os << c;
  p.label_ = os.str();
  p.stats_.sup = p.stats_.inf = p.stats_.sup_ball = c;
  p.constant_ = true;
  return p;
}

Potential Potential::shifted(double c) const {
  Potential p = *this;
  p.shift_ += c;
  p.stats_.sup += c;
  p.stats_.inf += c;
  p.stats_.sup_ball += c;
  return p;
}

Potential Potential::scaled(double t) const {
  Potential p = *this;
  p.scale_ *= t;
  p.shift_ *= t;
  const PotentialStats s = stats_;
  p.stats_.seminorm = std::abs(t) * s.seminorm;
  if (t >= 0) {
    p.stats_.sup = t * s.sup;
    p.stats_.inf = t * s.inf;
    p.stats_.sup_slack = t * s.sup_slack;
    p.stats_.inf_slack = t * s.inf_slack;
    p.stats_.sup_ball_slack = t * s.sup_ball_slack;
    p.stats_.sup_ball = t * s.sup_ball;
  } else {
    p.stats_.sup = t * s.inf;
    p.stats_.inf = t * s.sup;
    p.stats_.sup_slack = -t * s.inf_slack;
    p.stats_.inf_slack = -t * s.sup_slack;
    // sup over the ball of -phi is not cached; bound it by the global value.
    p.stats_.sup_ball = p.stats_.sup;
    p.stats_.sup_ball_slack = p.stats_.sup_slack;
  }
  return p;
}

double Potential::sum_along(const std::vector<Vecd>& orb, std::size_t n) const {
  if (constant_) return static_cast<double>(n) * (scale_ * eval_(Vecd()) + shift_);
  if (cocycle_) return scale_ * cocycle_->sum(orb, n) + static_cast<double>(n) * shift_;
  double s = 0;
  for (std::size_t k = 0; k < n; ++k) s += (*this)(orb[k]);
  return s;
}

double birkhoff_sum(const DAMap& g, const Potential& phi, const Vecd& x, int n) {
  if (n < 0) throw std::invalid_argument("birkhoff_sum: n must be nonnegative");
  double s = 0;
  Vecd y = x;
  for (int k = 0; k < n; ++k) {
    s += phi(y);
    if (k + 1 < n) y = g(y);
  }
  return s;
}

VariationEstimate variation(const Potential& phi, double eta, int n_pairs, std::uint64_t seed) {
  if (!(eta > 0)) throw std::invalid_argument("variation: eta must be positive");
  VariationEstimate out;
  out.bound = phi.seminorm() * std::pow(eta, phi.alpha());
  if (phi.is_constant()) return out;
  const int d = phi.dim();
  Rng rng(seed);
  for (int i = 0; i < n_pairs; ++i) {
    Vecd x = uniform_point(rng, d);
    Vecd dir(d);
    if (i % 2 == 0) {
      dir = Vecd::Zero(d);
      dir(static_cast<int>(rng() % static_cast<std::uint64_t>(d))) = 1.0;
    } else {
      for (int k = 0; k < d; ++k) dir(k) = standard_normal(rng);
      dir.normalize();
    }
    // Distances concentrate near eta, where the variation is attained.
    double r = eta * (1.0 - std::ldexp(uniform01(rng), -static_cast<int>(i % 30)));
    r = std::min(r, eta * (1 - 1e-12));
    Vecd y = reduce_coords<double>(x + r * dir);
    if (flat_distance<double>(x, y) >= eta) continue;
    out.value = std::max(out.value, std::abs(phi(x) - phi(y)));
  }
  return out;
}

Potential geometric_potential(const DAMap& g, int n_back, const StatsOptions& opts) {
  if (n_back < 0) throw std::invalid_argument("geometric_potential: n_back must be nonnegative");
  DAMap map = g;
  Potential::Eval f = [map, n_back](const Vecd& x) {
    Vecd v = estimate_unstable_direction(map, x, n_back);
    return -std::log((map.jacobian(x) * v).norm());
  };
  StatsOptions o = opts;
  if (o.q.size() != g.dim()) o.q = g.q();
  if (opts.grid_budget == StatsOptions{}.grid_budget) o.grid_budget = 1L << 13;
  if (opts.seminorm_pairs == StatsOptions{}.seminorm_pairs) o.seminorm_pairs = 4000;
  Potential p;
  if (g.is_linear()) {
    p = Potential::constant(f(Vecd::Zero(g.dim())), g.dim());
    p.stats_.alpha = 1.0;
  } else {
    p = Potential::from_function(f, g.dim(), 1.0, o, "phi_u");
  }
  p.label_ = "phi_u";
  p.cocycle_ = std::make_shared<UnstableCocycle>(UnstableCocycle{map, n_back});
  return p;
}

}  // namespace dathermo
