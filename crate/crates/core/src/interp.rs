//! Piecewise-cubic Hermite interpolation with monotonicity-preserving slopes.

#[derive(Debug, Clone)]
pub struct HermiteSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl HermiteSpline {
    /// Interpolant through `(x, y)` using the supplied node derivatives,
    /// limited with the Fritsch–Carlson condition so that monotone data
    /// yield a monotone interpolant.
    pub fn monotone(x: Vec<f64>, y: Vec<f64>, dy: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len() && y.len() == dy.len());
        let mut m = dy;
        let n = x.len();
        for k in 0..n - 1 {
            let delta = (y[k + 1] - y[k]) / (x[k + 1] - x[k]);
            if delta == 0.0 {
                m[k] = 0.0;
                m[k + 1] = 0.0;
                continue;
            }
            if m[k] * delta < 0.0 {
                m[k] = 0.0;
            }
            if m[k + 1] * delta < 0.0 {
                m[k + 1] = 0.0;
            }
            let a = m[k] / delta;
            let b = m[k + 1] / delta;
            let r2 = a * a + b * b;
            if r2 > 9.0 {
                let t = 3.0 / r2.sqrt();
                m[k] = t * a * delta;
                m[k + 1] = t * b * delta;
            }
        }
        Self { x, y, m }
    }

    /// Shape-preserving interpolant with slopes estimated from the data
    /// (weighted harmonic mean of neighbouring secants, zero at extrema).
    pub fn pchip(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len());
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut m = vec![0.0; n];
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for k in 1..n - 1 {
            if d[k - 1] * d[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
            }
        }
        Self::monotone(x, y, m)
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn lower(&self) -> f64 {
        self.x[0]
    }

    pub fn upper(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    fn locate(&self, t: f64) -> usize {
        let n = self.x.len();
        let p = self.x.partition_point(|&v| v <= t);
        p.saturating_sub(1).min(n - 2)
    }

    /// Value and first derivative at `t`; `t` is clamped into the knot range.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let t = t.clamp(self.lower(), self.upper());
        let k = self.locate(t);
        let dx = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / dx;
        let s2 = s * s;
        let s3 = s2 * s;
        let (y0, y1, m0, m1) = (self.y[k], self.y[k + 1], self.m[k], self.m[k + 1]);
        let value = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * dx * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * dx * m1;
        let deriv = (6.0 * s2 - 6.0 * s) * (y0 - y1) / dx + (3.0 * s2 - 4.0 * s + 1.0) * m0 + (3.0 * s2 - 2.0 * s) * m1;
        (value, deriv)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).0
    }
}
