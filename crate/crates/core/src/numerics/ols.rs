use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff for the pseudo-solve.
const SV_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coef: DVector<f64>,
    pub rank_deficient: bool,
    /// Always 0; OLS is closed form.
    pub iterations: usize,
}

impl LinearFit {
    pub fn predict(&self, design: &DMatrix<f64>) -> DVector<f64> {
        design * &self.coef
    }
}

/// Least squares via SVD; minimum-norm solution when the design is rank
/// deficient (singular values below `1e-12 * sigma_max` are dropped).
pub fn ols(design: &DMatrix<f64>, y: &[f64]) -> LinearFit {
    ols_multi(design, &[y]).pop().expect("one response")
}

/// Several responses sharing one design and one decomposition.
pub fn ols_multi(design: &DMatrix<f64>, ys: &[&[f64]]) -> Vec<LinearFit> {
    let (n, p) = design.shape();
    if n == 0 || p == 0 {
        return ys
            .iter()
            .map(|_| LinearFit {
                coef: DVector::zeros(p),
                rank_deficient: p > 0,
                iterations: 0,
            })
            .collect();
    }
    let svd = design.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let cutoff = SV_CUTOFF * sigma_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    ys.iter()
        .map(|y| {
            assert_eq!(y.len(), n, "response length must match design rows");
            let y = DVector::from_column_slice(y);
            let mut uty = u.transpose() * y;
            for (k, s) in svd.singular_values.iter().enumerate() {
                uty[k] = if *s > cutoff { uty[k] / s } else { 0.0 };
            }
            LinearFit {
                coef: v_t.transpose() * uty,
                rank_deficient: rank < p,
                iterations: 0,
            }
        })
        .collect()
}
