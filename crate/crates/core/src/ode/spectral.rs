use super::{check_steps, terminal_values, WGrid};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Relative eigenvalue gap below which the decomposition is refused.
pub const TOL_DEGENERATE: f64 = 1e-9;

/// Eigen-decomposition of the bidiagonal system matrix.
///
/// Eigenvalue `j` is `alpha j^2 - beta j`; its eigenvector `f_j` is
/// normalised to `(f_j)_j = 1` and vanishes above row `j`. The solution is
/// `w(t) = sum_j c_j exp(-lambda_j (T - t)) f_j`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    params: ModelParams,
    eigenvalues: Vec<f64>,
    /// `eigvecs[j][i]` holds `(f_j)_{j+i}`.
    eigvecs: Vec<Vec<f64>>,
    /// Kept in double-double: the basis is badly conditioned when eigenvalue
    /// gaps are small compared with `eta`, and the expansion cancels heavily.
    coeffs: Vec<Dd>,
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }

    /// `self + a * b`, exact product via fma.
    fn add_product(self, a: f64, b: f64) -> Self {
        let p = a * b;
        let e = a.mul_add(b, -p);
        self.add(Dd { hi: p, lo: e })
    }

    fn scale(self, x: f64) -> Self {
        Dd::default().add_product(self.hi, x).add_product(self.lo, x)
    }

    fn add(self, o: Dd) -> Self {
        // two-sum of the leading parts, then fold in the tails
        let s = self.hi + o.hi;
        let bb = s - self.hi;
        let err = (self.hi - (s - bb)) + (o.hi - bb);
        let lo = err + self.lo + o.lo;
        let hi = s + lo;
        Dd {
            hi,
            lo: lo - (hi - s),
        }
    }

    fn neg(self) -> Self {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

pub fn solve_spectral(p: &ModelParams) -> Result<SpectralDecomposition> {
    SpectralDecomposition::new(p, p.q_max)
}

impl SpectralDecomposition {
    /// Decomposes the system truncated at inventory `q_max` (which may be 0).
    pub fn new(p: &ModelParams, q_max: usize) -> Result<Self> {
        p.validate()?;
        let c = p.coefficients();
        let eigenvalues: Vec<f64> = (0..=q_max).map(|q| c.lambda(q)).collect();
        let scale = eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        for j in 0..=q_max {
            for q in j + 1..=q_max {
                let gap = eigenvalues[q] - eigenvalues[j];
                if gap.abs() <= TOL_DEGENERATE * scale {
                    return Err(Error::Degenerate { j, q, gap });
                }
            }
        }

        let eigvecs: Vec<Vec<f64>> = (0..=q_max)
            .map(|j| {
                let mut f = Vec::with_capacity(q_max + 1 - j);
                f.push(1.0);
                for q in j + 1..=q_max {
                    let prev = *f.last().unwrap();
                    f.push(c.eta * prev / (eigenvalues[q] - eigenvalues[j]));
                }
                f
            })
            .collect();

        // forward substitution against the unit lower-triangular basis
        let target = terminal_values(p, q_max);
        let mut coeffs: Vec<Dd> = Vec::with_capacity(q_max + 1);
        for q in 0..=q_max {
            let mut r = Dd::from(target[q]);
            for (j, cj) in coeffs.iter().enumerate() {
                let f = eigvecs[j][q - j];
                r = r.add(Dd::default().add_product(cj.hi, f).add_product(cj.lo, f).neg());
            }
            coeffs.push(r);
        }

        Ok(Self {
            params: *p,
            eigenvalues,
            eigvecs,
            coeffs,
        })
    }

    pub fn q_max(&self) -> usize {
        self.eigenvalues.len() - 1
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn coeffs(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.value()).collect()
    }

    /// Component `q` of eigenvector `j` (zero for `q < j`).
    pub fn eigvec(&self, j: usize, q: usize) -> f64 {
        if q < j {
            0.0
        } else {
            self.eigvecs[j][q - j]
        }
    }

    /// Conditioning of [`evaluate_at`](Self::evaluate_at): for each `q`, the
    /// sum of the magnitudes of the modal terms over `|w_q(t)|`. Relative
    /// error is about this times the unit roundoff.
    pub fn condition_at(&self, t: f64) -> Vec<f64> {
        let tau = self.params.horizon - t;
        let mut mass = vec![0.0; self.q_max() + 1];
        for (j, f) in self.eigvecs.iter().enumerate() {
            let weight = (self.coeffs[j].value() * (-self.eigenvalues[j] * tau).exp()).abs();
            for (i, fi) in f.iter().enumerate() {
                mass[j + i] += weight * fi.abs();
            }
        }
        let w = self.evaluate_at(t);
        mass.iter().zip(&w).map(|(m, v)| m / v.abs()).collect()
    }

    pub fn evaluate_at(&self, t: f64) -> Vec<f64> {
        let tau = self.params.horizon - t;
        let mut w = vec![Dd::default(); self.q_max() + 1];
        for (j, f) in self.eigvecs.iter().enumerate() {
            let weight = self.coeffs[j].scale((-self.eigenvalues[j] * tau).exp());
            for (i, fi) in f.iter().enumerate() {
                w[j + i] = w[j + i]
                    .add_product(weight.hi, *fi)
                    .add_product(weight.lo, *fi);
            }
        }
        w.into_iter().map(Dd::value).collect()
    }

    pub fn to_grid(&self, n_steps: usize) -> Result<WGrid> {
        check_steps("n_steps", n_steps, 1)?;
        let horizon = self.params.horizon;
        let mut values = Vec::with_capacity((n_steps + 1) * (self.q_max() + 1));
        for n in 0..=n_steps {
            let t = if n == n_steps {
                horizon
            } else {
                n as f64 * (horizon / n_steps as f64)
            };
            values.extend(self.evaluate_at(t));
        }
        WGrid::from_values(self.params, n_steps, self.q_max(), values)
    }
}
