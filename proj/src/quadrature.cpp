#include "slm/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace slm {

namespace {

// Gauss 7 / Kronrod 15 nodes and weights on [-1, 1].
// Layout: {node, gauss weight, kronrod weight}; nodes with zero gauss weight
// belong to the Kronrod extension only.
constexpr double kNW[8][3] = {
    {0.000000000000000, 0.417959183673469, 0.209482141084728},
    {0.405845151377397, 0.381830050505119, 0.190350578064785},
    {0.741531185599394, 0.279705391489277, 0.140653259715525},
    {0.949107912342759, 0.129484966168870, 0.063092092629979},
    {0.207784955007898, 0.0, 0.204432940075298},
    {0.586087235467691, 0.0, 0.169004726639267},
    {0.864864423359769, 0.0, 0.104790010322250},
    {0.991455371120813, 0.0, 0.022935322010529},
};

struct PanelResult {
  double value;
  double error;
  bool finite;
};

PanelResult g7k15(const std::function<double(double)>& f, double a, double b) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double y0 = f(mid);
  double g7 = kNW[0][1] * y0;
  double k15 = kNW[0][2] * y0;
  bool finite = std::isfinite(y0);
  for (int i = 1; i < 8; ++i) {
    const double dx = half * kNW[i][0];
    const double yi = f(mid + dx) + f(mid - dx);
    finite = finite && std::isfinite(yi);
    g7 += kNW[i][1] * yi;
    k15 += kNW[i][2] * yi;
  }
  g7 *= half;
  k15 *= half;
  const double diff = std::abs(k15 - g7);
  // standard (200 |G-K|)^1.5 error heuristic
  const double err = 200.0 * diff * std::sqrt(std::max(200.0 * diff, 0.0));
  return {k15, std::min(err, std::abs(k15) + diff), finite};
}

}  // namespace

QuadResult integrate(const std::function<double(double)>& f, double a, double b,
                     double rel_tol, double abs_tol, int max_intervals) {
  QuadResult out;
  if (a == b) return out;

  struct Seg {
    double a, b;
  };
  std::vector<Seg> stack{{a, b}};
  int used = 0;
  while (!stack.empty()) {
    const Seg s = stack.back();
    stack.pop_back();
    const PanelResult p = g7k15(f, s.a, s.b);
    if (!p.finite) {
      out.finite = false;
      out.value = p.value;
      return out;
    }
    const bool small = std::abs(s.b - s.a) <= 1e-14 * (std::abs(a) + std::abs(b) + 1.0);
    if (p.error <= abs_tol || p.error <= rel_tol * std::abs(p.value) || small) {
      out.value += p.value;
      out.error += p.error;
      continue;
    }
    if (++used >= max_intervals) {
      out.value += p.value;
      out.error += p.error;
      out.converged = false;
      continue;
    }
    const double mid = 0.5 * (s.a + s.b);
    stack.push_back({s.a, mid});
    stack.push_back({mid, s.b});
  }
  return out;
}

ImproperResult integrate_to_boundary(const std::function<double(double)>& f,
                                     double from, double boundary,
                                     double divergence_cap, int max_segments) {
  ImproperResult out;
  const bool to_pos_inf = std::isinf(boundary) && boundary > 0.0;
  const bool to_neg_inf = std::isinf(boundary) && boundary < 0.0;

  double total = 0.0, err = 0.0;
  double prev_abs = -1.0;
  std::vector<double> ratios;

  double t_prev = from;
  const double unit = std::max(1.0, std::abs(from));
  for (int j = 0; j < max_segments; ++j) {
    double t_next;
    if (to_pos_inf) {
      t_next = from + unit * (std::pow(2.0, j + 1) - 1.0);
    } else if (to_neg_inf) {
      t_next = from - unit * (std::pow(2.0, j + 1) - 1.0);
    } else {
      // approach a finite boundary geometrically
      t_next = boundary + (from - boundary) * std::pow(2.0, -(j + 1));
      if (j + 1 == max_segments) t_next = boundary + (from - boundary) * 1e-12;
    }

    const QuadResult q = integrate(f, t_prev, t_next, 1e-9, 1e-16, 512);
    out.segments_used = j + 1;
    if (!q.finite || !std::isfinite(q.value)) {
      out.divergent = true;
      return out;
    }
    total += q.value;
    err += q.error;
    out.last_segment = q.value;

    if (std::abs(total) > divergence_cap) {
      out.divergent = true;
      return out;
    }

    const double cur_abs = std::abs(q.value);
    if (prev_abs > 0.0) ratios.push_back(cur_abs / prev_abs);
    prev_abs = std::max(cur_abs, 1e-300);

    // converged: the last segments decay geometrically and the projected tail
    // is negligible against the running total
    if (ratios.size() >= 3) {
      const double r = std::max({ratios[ratios.size() - 1], ratios[ratios.size() - 2],
                                 ratios[ratios.size() - 3]});
      if (r < 0.9) {
        const double tail = cur_abs * r / (1.0 - r);
        if (tail <= std::max(1e-12, 1e-10 * std::abs(total))) {
          out.value = total;
          out.error = err + tail;
          return out;
        }
      }
    }
    t_prev = t_next;
  }

  // Budget exhausted: classify from the decay rate of the segment sums.
  if (ratios.size() >= 3) {
    std::vector<double> last(ratios.end() - 3, ratios.end());
    std::sort(last.begin(), last.end());
    const double r_med = last[1];
    if (r_med < 1.0 - 1e-3) {
      const double tail = prev_abs * r_med / (1.0 - r_med);
      out.value = total;
      out.error = err + tail;
      return out;
    }
  }
  out.divergent = true;
  return out;
}

}  // namespace slm
