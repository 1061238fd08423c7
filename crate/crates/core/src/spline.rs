//! Natural cubic spline used by the profile resampler.

pub(crate) struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    /// `knots` strictly increasing, at least two entries.
    pub(crate) fn natural(knots: Vec<f64>, values: Vec<f64>) -> Self {
        let n = knots.len();
        debug_assert_eq!(n, values.len());
        let mut second = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations.
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for k in 0..m {
                let i = k + 1;
                let h0 = knots[i] - knots[i - 1];
                let h1 = knots[i + 1] - knots[i];
                diag[k] = 2.0 * (h0 + h1);
                upper[k] = h1;
                rhs[k] = 6.0
                    * ((values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0);
            }
            for k in 1..m {
                let lower = knots[k + 1] - knots[k];
                let w = lower / diag[k - 1];
                diag[k] -= w * upper[k - 1];
                rhs[k] -= w * rhs[k - 1];
            }
            let mut sol = vec![0.0; m];
            sol[m - 1] = rhs[m - 1] / diag[m - 1];
            for k in (0..m - 1).rev() {
                sol[k] = (rhs[k] - upper[k] * sol[k + 1]) / diag[k];
            }
            second[1..(m + 1)].copy_from_slice(&sol[..m]);
        }
        Self {
            knots,
            values,
            second,
        }
    }

    pub(crate) fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        let i = match self.knots.binary_search_by(|k| k.total_cmp(&t)) {
            Ok(i) => return self.values[i],
            Err(0) => 0,
            Err(i) if i >= n => n - 2,
            Err(i) => i - 1,
        };
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        self.values[i]
            + b * (self.values[i + 1] - self.values[i])
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }
}
