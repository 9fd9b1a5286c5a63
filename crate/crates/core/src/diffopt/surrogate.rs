//! Local quadratic models of an objective and their box-constrained maximizer.

use super::{Bounds, DiffOptError, Dual};

/// Fixed number of projected-ascent iterations used by [`maximize_surrogate`].
pub const SURROGATE_ASCENT_STEPS: usize = 50;

/// `q(Δ) = value + gᵀΔ + ½ ΔᵀHΔ`
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticSurrogate {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
}

impl QuadraticSurrogate {
    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn eval(&self, delta: &[f64]) -> f64 {
        let n = self.dim();
        let mut lin = 0.0;
        let mut quad = 0.0;
        for i in 0..n {
            lin += self.gradient[i] * delta[i];
            for j in 0..n {
                quad += delta[i] * self.hessian[i][j] * delta[j];
            }
        }
        self.value + lin + 0.5 * quad
    }

    fn slope(&self, delta: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                self.gradient[i]
                    + (0..self.dim())
                        .map(|j| self.hessian[i][j] * delta[j])
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Second-order Taylor expansion of `f` at `u` via nested forward passes,
/// one per unordered coordinate pair.
pub fn build_surrogate<F>(mut f: F, u: &[f64]) -> Result<QuadraticSurrogate, DiffOptError>
where
    F: FnMut(&[Dual<Dual<f64>>]) -> Dual<Dual<f64>>,
{
    let n = u.len();
    let mut x: Vec<Dual<Dual<f64>>> = u.iter().map(|v| Dual::lift(Dual::lift(*v))).collect();
    let mut gradient = vec![0.0; n];
    let mut hessian = vec![vec![0.0; n]; n];
    let mut value = f64::NAN;
    if n == 0 {
        value = f(&x).re.re;
    }
    for i in 0..n {
        for j in i..n {
            x[i].eps.re = 1.0;
            x[j].re.eps = 1.0;
            let out = f(&x);
            x[i].eps.re = 0.0;
            x[j].re.eps = 0.0;
            value = out.re.re;
            if i == j {
                gradient[i] = out.re.eps;
            }
            hessian[i][j] = out.eps.eps;
            hessian[j][i] = out.eps.eps;
        }
    }
    let finite = value.is_finite()
        && gradient.iter().all(|g| g.is_finite())
        && hessian.iter().flatten().all(|h| h.is_finite());
    if !finite {
        return Err(DiffOptError::NonFinite {
            iteration: 0,
            value,
        });
    }
    Ok(QuadraticSurrogate {
        value,
        gradient,
        hessian,
    })
}

/// Maximize `q` over the box.
///
/// A negative-definite Hessian whose Newton point lies inside the box is solved
/// exactly. Otherwise projected ascent with Jacobi (row-sum) step sizes runs
/// for [`SURROGATE_ASCENT_STEPS`] iterations from zero, and for indefinite
/// models also from every box corner in low dimension. The best candidate is
/// returned, never scoring below `q(0)`.
pub fn maximize_surrogate(q: &QuadraticSurrogate, bounds: &Bounds) -> Vec<f64> {
    let n = q.dim();
    let zero = vec![0.0; n];
    if n == 0 {
        return zero;
    }
    let neg_definite = cholesky_neg(&q.hessian);
    if let Some(l) = &neg_definite {
        let newton = chol_solve(l, &q.gradient);
        if bounds.contains(&newton) {
            return newton;
        }
    }

    let steps: Vec<f64> = q
        .hessian
        .iter()
        .map(|row| 1.0 / row.iter().map(|h| h.abs()).sum::<f64>().max(1e-12))
        .collect();
    let ascend = |start: Vec<f64>| -> (Vec<f64>, f64) {
        let mut d = start;
        bounds.project(&mut d);
        let mut best = (d.clone(), q.eval(&d));
        for _ in 0..SURROGATE_ASCENT_STEPS {
            let s = q.slope(&d);
            for i in 0..n {
                d[i] += s[i] * steps[i];
            }
            bounds.project(&mut d);
            let v = q.eval(&d);
            if v > best.1 {
                best = (d.clone(), v);
            }
        }
        best
    };

    let mut best = ascend(zero);
    if neg_definite.is_none() && n <= 4 {
        for mask in 0..(1usize << n) {
            let corner: Vec<f64> = (0..n)
                .map(|i| if mask >> i & 1 == 1 { bounds.hi[i] } else { bounds.lo[i] })
                .collect();
            let cand = ascend(corner);
            if cand.1 > best.1 {
                best = cand;
            }
        }
    }
    best.0
}

/// Cholesky factor of `-H`, or `None` when `H` is not negative definite.
fn cholesky_neg(h: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = h.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = -h[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 1e-14 {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Solves `(L Lᵀ) x = b`, i.e. `x = (-H)⁻¹ g = -H⁻¹ g`.
fn chol_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffopt::Scalar;

    fn quad(g: [f64; 2], h: [[f64; 2]; 2]) -> QuadraticSurrogate {
        QuadraticSurrogate {
            value: 1.0,
            gradient: g.to_vec(),
            hessian: h.iter().map(|r| r.to_vec()).collect(),
        }
    }

    #[test]
    fn zero_delta_gives_expansion_value() {
        let f = |x: &[Dual<Dual<f64>>]| x[0].sin() * x[1].exp() + x[0].sq();
        let q = build_surrogate(f, &[0.4, -0.3]).unwrap();
        let direct = 0.4_f64.sin() * (-0.3_f64).exp() + 0.16;
        assert!((q.eval(&[0.0, 0.0]) - direct).abs() < 1e-15);
    }

    #[test]
    fn cubic_error_shrinks_eightfold() {
        let f = |x: &[Dual<Dual<f64>>]| x[0] * x[0] * x[0] + x[0] * x[1] * x[1];
        let fv = |a: f64, b: f64| a * a * a + a * b * b;
        let u = [0.5, 0.2];
        let q = build_surrogate(f, &u).unwrap();
        let err = |s: f64| {
            let d = [0.3 * s, -0.2 * s];
            (q.eval(&d) - fv(u[0] + d[0], u[1] + d[1])).abs()
        };
        let ratio = err(1.0) / err(0.5);
        assert!((ratio - 8.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn zero_gradient_negative_definite_stays_at_origin() {
        let q = quad([0.0, 0.0], [[-2.0, 0.3], [0.3, -1.0]]);
        let d = maximize_surrogate(&q, &Bounds::symmetric(&[1.0, 1.0]));
        assert_eq!(d, vec![0.0, 0.0]);
    }

    #[test]
    fn newton_point_when_interior() {
        let q = quad([0.4, -0.1], [[-2.0, 0.5], [0.5, -1.0]]);
        let d = maximize_surrogate(&q, &Bounds::symmetric(&[1.0, 1.0]));
        // -H^{-1} g by Cramer's rule
        let det = (-2.0) * (-1.0) - 0.25;
        let x0 = -((-1.0) * 0.4 - 0.5 * (-0.1)) / det;
        let x1 = -((-2.0) * (-0.1) - 0.5 * 0.4) / det;
        assert!((d[0] - x0).abs() < 1e-12 && (d[1] - x1).abs() < 1e-12);
    }

    #[test]
    fn optimum_outside_box_lands_on_boundary() {
        let q = quad([5.0, 0.0], [[-1.0, 0.0], [0.0, -1.0]]);
        let d = maximize_surrogate(&q, &Bounds::symmetric(&[0.5, 0.5]));
        assert!((d[0] - 0.5).abs() < 1e-12);
        assert!(d[1].abs() < 1e-12);
    }

    #[test]
    fn indefinite_model_beats_every_corner() {
        let q = quad([0.1, -0.2], [[1.5, 0.2], [0.2, -2.0]]);
        let b = Bounds::symmetric(&[0.5, 0.25]);
        let d = maximize_surrogate(&q, &b);
        let on_boundary = (d[0].abs() - 0.5).abs() < 1e-12 || (d[1].abs() - 0.25).abs() < 1e-12;
        assert!(on_boundary, "{d:?}");
        let mut best_corner = f64::NEG_INFINITY;
        for sx in [-0.5, 0.5] {
            for sy in [-0.25, 0.25] {
                best_corner = best_corner.max(q.eval(&[sx, sy]));
            }
        }
        assert!(q.eval(&d) >= best_corner - 1e-12);
        assert!(q.eval(&d) >= q.eval(&[0.0, 0.0]));
    }
}
