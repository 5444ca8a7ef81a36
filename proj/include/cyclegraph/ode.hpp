#pragma once

#include <array>
#include <type_traits>

#include "core.hpp"

namespace cyclegraph {

template <class Sc = cplx>
struct EndpointData {
  Sc S{}, Sp{}, C{}, Cp{};
};

template <class Sc = cplx>
struct SolutionTrace {
  std::vector<double> grid;
  std::vector<Sc> S, Sp, C, Cp;
};

struct OdeOptions {
  int halvings = 0;  // each potential cell is split into 2^halvings Magnus steps
};

struct OverflowError : Error {
  using Error::Error;
};

namespace detail {

template <class Sc>
struct is_complex : std::false_type {};
template <class R>
struct is_complex<std::complex<R>> : std::true_type {};

// cosh(sqrt z) and sinh(sqrt z)/sqrt z; both entire in z.
template <class Sc>
inline void chsh(Sc z, Sc& ch, Sc& sh) {
  if (std::abs(z) < 1e-3) {
    ch = 1.0 + z * (1.0 / 2 + z * (1.0 / 24 + z * (1.0 / 720 + z * (1.0 / 40320))));
    sh = 1.0 + z * (1.0 / 6 + z * (1.0 / 120 + z * (1.0 / 5040 + z * (1.0 / 362880))));
    return;
  }
  if constexpr (is_complex<Sc>::value) {
    Sc s = std::sqrt(z);
    ch = std::cosh(s);
    sh = std::sinh(s) / s;
  } else {
    if (z > 0) {
      double s = std::sqrt(z);
      ch = std::cosh(s);
      sh = std::sinh(s) / s;
    } else {
      double s = std::sqrt(-z);
      ch = std::cos(s);
      sh = std::sin(s) / s;
    }
  }
}

// d/dz [sinh(sqrt z)/sqrt z]
template <class Sc>
inline Sc dsh(Sc z, Sc ch, Sc sh) {
  if (std::abs(z) < 1e-2)
    return 1.0 / 6 + z * (2.0 / 120 + z * (3.0 / 5040 + z * (4.0 / 362880 + z * (5.0 / 39916800))));
  return (ch - sh) / (2.0 * z);
}

template <class Sc>
using Mat2 = std::array<Sc, 4>;  // row-major [[0,1],[2,3]]

template <class Sc>
inline Mat2<Sc> mul(const Mat2<Sc>& A, const Mat2<Sc>& B) {
  return {A[0] * B[0] + A[1] * B[2], A[0] * B[1] + A[1] * B[3], A[2] * B[0] + A[3] * B[2],
          A[2] * B[1] + A[3] * B[3]};
}

// One two-point Gauss Magnus step of Y' = [[0,1],[q-lambda,0]] Y across [x, x+h] with
// q linear from q0 to q1.  Returns exp(Omega); optionally its lambda-derivative.
template <class Sc>
inline Mat2<Sc> magnus_step(double q0, double q1, double h, Sc lam, Mat2<Sc>* dE = nullptr) {
  constexpr double c1 = 0.5 - 0.28867513459481288225;  // 1/2 - sqrt(3)/6
  constexpr double c2 = 0.5 + 0.28867513459481288225;
  constexpr double k3 = 0.14433756729740644113;  // sqrt(3)/12
  Sc g1 = (q0 + c1 * (q1 - q0)) - lam;
  Sc g2 = (q0 + c2 * (q1 - q0)) - lam;
  Sc a = k3 * h * h * (g1 - g2);
  Sc c = 0.5 * h * (g1 + g2);
  Sc z = a * a + h * c;
  Sc ch, sh;
  chsh(z, ch, sh);
  Mat2<Sc> E{ch + sh * a, sh * h, sh * c, ch - sh * a};
  if (dE) {
    Sc dz = -h * h;
    Sc dshz = dsh(z, ch, sh);
    Sc dch = 0.5 * sh * dz, dsv = dshz * dz;
    *dE = Mat2<Sc>{dch + dsv * a, dsv * h, dsv * c - sh * h, dch - dsv * a};
  }
  return E;
}

inline void check_budget(cplx lam, double T) {
  double im = std::abs(std::sqrt(lam).imag());
  constexpr double budget = 700.0 * 2.302585092994045684;
  if (im * T > budget)
    throw OverflowError("overflow guard: |Im rho|*T = " + std::to_string(im * T) + " exceeds budget " +
                        std::to_string(budget));
}

}  // namespace detail

// Propagates Y = [[C, S], [C', S']] from x=0 to x=T.
template <class Sc = cplx>
EndpointData<Sc> integrate_fundamental(const GridFunction& q, Sc lam, const OdeOptions& opt = {}) {
  detail::check_budget(cplx(lam), q.length);
  const int sub = 1 << opt.halvings;
  const double h = q.step() / sub;
  detail::Mat2<Sc> Y{Sc(1), Sc(0), Sc(0), Sc(1)};
  for (int i = 0; i + 1 < q.n(); ++i) {
    for (int s = 0; s < sub; ++s) {
      double qa = q.values[i] + (q.values[i + 1] - q.values[i]) * double(s) / sub;
      double qb = q.values[i] + (q.values[i + 1] - q.values[i]) * double(s + 1) / sub;
      Y = detail::mul(detail::magnus_step<Sc>(qa, qb, h, lam), Y);
    }
  }
  return {Y[1], Y[3], Y[0], Y[2]};
}

// Derivatives with respect to lambda of S(T), S'(T), C(T), C'(T).
template <class Sc = cplx>
EndpointData<Sc> lambda_derivative(const GridFunction& q, Sc lam, const OdeOptions& opt = {},
                                   EndpointData<Sc>* values = nullptr) {
  detail::check_budget(cplx(lam), q.length);
  const int sub = 1 << opt.halvings;
  const double h = q.step() / sub;
  detail::Mat2<Sc> Y{Sc(1), Sc(0), Sc(0), Sc(1)}, D{Sc(0), Sc(0), Sc(0), Sc(0)}, dE;
  for (int i = 0; i + 1 < q.n(); ++i) {
    for (int s = 0; s < sub; ++s) {
      double qa = q.values[i] + (q.values[i + 1] - q.values[i]) * double(s) / sub;
      double qb = q.values[i] + (q.values[i + 1] - q.values[i]) * double(s + 1) / sub;
      auto E = detail::magnus_step<Sc>(qa, qb, h, lam, &dE);
      auto t1 = detail::mul(dE, Y), t2 = detail::mul(E, D);
      for (int k = 0; k < 4; ++k) D[k] = t1[k] + t2[k];
      Y = detail::mul(E, Y);
    }
  }
  if (values) *values = {Y[1], Y[3], Y[0], Y[2]};
  return {D[1], D[3], D[0], D[2]};
}

// Values on the potential's own grid.
template <class Sc = cplx>
SolutionTrace<Sc> solution_trace(const GridFunction& q, Sc lam, const OdeOptions& opt = {},
                                 bool with_C = true) {
  detail::check_budget(cplx(lam), q.length);
  const int n = q.n(), sub = 1 << opt.halvings;
  const double h = q.step() / sub;
  SolutionTrace<Sc> tr;
  tr.grid.resize(n);
  tr.S.resize(n);
  tr.Sp.resize(n);
  if (with_C) {
    tr.C.resize(n);
    tr.Cp.resize(n);
  }
  detail::Mat2<Sc> Y{Sc(1), Sc(0), Sc(0), Sc(1)};
  for (int i = 0; i < n; ++i) {
    if (i > 0)
      for (int s = 0; s < sub; ++s) {
        double qa = q.values[i - 1] + (q.values[i] - q.values[i - 1]) * double(s) / sub;
        double qb = q.values[i - 1] + (q.values[i] - q.values[i - 1]) * double(s + 1) / sub;
        Y = detail::mul(detail::magnus_step<Sc>(qa, qb, h, lam), Y);
      }
    tr.grid[i] = q.x(i);
    tr.S[i] = Y[1];
    tr.Sp[i] = Y[3];
    if (with_C) {
      tr.C[i] = Y[0];
      tr.Cp[i] = Y[2];
    }
  }
  return tr;
}

// Values at arbitrary sorted nodes in [0, T]; partial cells use the interpolated potential.
template <class Sc = cplx>
SolutionTrace<Sc> solution_trace(const GridFunction& q, Sc lam, const std::vector<double>& nodes,
                                 const OdeOptions& opt = {}) {
  detail::check_budget(cplx(lam), q.length);
  if (!std::is_sorted(nodes.begin(), nodes.end())) throw Error("solution_trace: nodes must be sorted");
  if (!nodes.empty() && (nodes.front() < 0.0 || nodes.back() > q.length * (1 + 1e-14)))
    throw Error("solution_trace: nodes outside [0, T]");
  const int sub = 1 << opt.halvings;
  const double h = q.step();
  SolutionTrace<Sc> tr;
  tr.grid = nodes;
  detail::Mat2<Sc> Y{Sc(1), Sc(0), Sc(0), Sc(1)};
  int cell = 0;  // Y holds the solution at x = cell*h
  for (double xn : nodes) {
    int target = std::min(static_cast<int>(std::floor(xn / h)), q.n() - 1);
    for (; cell < target; ++cell)
      for (int s = 0; s < sub; ++s) {
        double qa = q.values[cell] + (q.values[cell + 1] - q.values[cell]) * double(s) / sub;
        double qb = q.values[cell] + (q.values[cell + 1] - q.values[cell]) * double(s + 1) / sub;
        Y = detail::mul(detail::magnus_step<Sc>(qa, qb, h / sub, lam), Y);
      }
    auto Z = Y;
    double rest = xn - cell * h;
    if (rest > 1e-15 * q.length && cell + 1 < q.n()) {
      double xa = cell * h;
      for (int s = 0; s < sub; ++s) {
        double qa = q.at(xa + rest * s / sub), qb = q.at(xa + rest * (s + 1) / sub);
        Z = detail::mul(detail::magnus_step<Sc>(qa, qb, rest / sub, lam), Z);
      }
    }
    tr.S.push_back(Z[1]);
    tr.Sp.push_back(Z[3]);
    tr.C.push_back(Z[0]);
    tr.Cp.push_back(Z[2]);
  }
  return tr;
}

template <class Sc>
double wronskian_defect(Sc C, Sc Sp, Sc Cp, Sc S) {
  double scale = std::max(1.0, std::abs(C * Sp) + std::abs(Cp * S));
  return std::abs(C * Sp - Cp * S - Sc(1)) / scale;
}

}  // namespace cyclegraph
