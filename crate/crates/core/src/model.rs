/// Linear map from a key offset (key minus the node's lower bound) to a slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinearModel {
    pub slope: f64,
    pub intercept: f64,
}

impl LinearModel {
    pub fn new(slope: f64, intercept: f64) -> Self {
        LinearModel { slope, intercept }
    }

    pub fn predict(&self, offset: f64) -> f64 {
        self.slope * offset + self.intercept
    }

    /// Prediction clamped into `[0, len - 1]`.
    pub fn predict_slot(&self, offset: f64, len: usize) -> usize {
        let raw = self.predict(offset);
        if !(raw > 0.0) {
            return 0;
        }
        let max = (len.max(1) - 1) as f64;
        if raw >= max {
            len.max(1) - 1
        } else {
            raw as usize
        }
    }

    /// Maps `[0, width)` evenly onto `len` slots.
    pub fn equal_width(width: f64, len: usize) -> Self {
        if width > 0.0 && width.is_finite() {
            LinearModel::new(len as f64 / width, 0.0)
        } else {
            LinearModel::default()
        }
    }

    /// Least-squares fit of rank to slot: the i-th of `n` sorted keys targets
    /// slot `i * capacity / n`. Degenerate inputs (all offsets equal) give a
    /// flat model at the mean target slot.
    pub fn fit_ranks(offsets: &[f64], capacity: usize) -> Self {
        let n = offsets.len();
        if n == 0 {
            return LinearModel::default();
        }
        let scale = capacity as f64 / n as f64;
        let nf = n as f64;
        let mean_x = offsets.iter().sum::<f64>() / nf;
        let mean_y = (nf - 1.0) / 2.0 * scale;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (i, &x) in offsets.iter().enumerate() {
            let dx = x - mean_x;
            sxx += dx * dx;
            sxy += dx * (i as f64 * scale - mean_y);
        }
        if sxx > 0.0 && sxx.is_finite() && sxy.is_finite() {
            let slope = (sxy / sxx).max(0.0);
            LinearModel::new(slope, mean_y - slope * mean_x)
        } else {
            LinearModel::new(0.0, mean_y)
        }
    }

    /// The model after the slot table it addresses has doubled in length.
    pub fn doubled(&self) -> Self {
        LinearModel::new(self.slope * 2.0, self.intercept * 2.0)
    }
}
