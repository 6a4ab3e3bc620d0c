//! Square 2D complex FFTs built from `rustfft` row transforms.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned forward/inverse transforms for an `m × m` grid.
///
/// The inverse transform is unnormalized (`x_j = Σ_k c_k e^{+2πi jk/m}`), so
/// it evaluates a Fourier series on the collocation grid. The forward
/// transform divides by `m²` and is its exact inverse.
pub struct Fft2 {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            m,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        let fft = Arc::clone(&self.inverse);
        self.apply(fft.as_ref(), buf);
    }

    pub fn forward(&mut self, buf: &mut [Complex64]) {
        let fft = Arc::clone(&self.forward);
        self.apply(fft.as_ref(), buf);
        let norm = 1.0 / (self.m * self.m) as f64;
        for c in buf.iter_mut() {
            *c *= norm;
        }
    }

    fn apply(&mut self, fft: &dyn Fft<f64>, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.m * self.m, "buffer does not match plan size");
        fft.process_with_scratch(buf, &mut self.scratch);
        transpose(buf, self.m);
        fft.process_with_scratch(buf, &mut self.scratch);
        transpose(buf, self.m);
    }
}

fn transpose(buf: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            buf.swap(i * m + j, j * m + i);
        }
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<RefCell<Fft2>>>> = RefCell::new(HashMap::new());
}

/// Runs `f` with a per-thread cached plan for an `m × m` grid.
pub(crate) fn with_fft<R>(m: usize, f: impl FnOnce(&mut Fft2) -> R) -> R {
    let plan = PLANS.with(|plans| {
        Rc::clone(
            plans
                .borrow_mut()
                .entry(m)
                .or_insert_with(|| Rc::new(RefCell::new(Fft2::new(m)))),
        )
    });
    let mut plan = plan.borrow_mut();
    f(&mut plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_inverts_inverse() {
        let m = 8;
        let mut fft = Fft2::new(m);
        let original: Vec<Complex64> = (0..m * m)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut buf = original.clone();
        fft.inverse(&mut buf);
        fft.forward(&mut buf);
        for (a, b) in buf.iter().zip(&original) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn inverse_evaluates_single_mode() {
        let m = 8;
        let mut fft = Fft2::new(m);
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
        // k = (1, 2) stored at row 1, column 2.
        buf[m + 2] = Complex64::new(1.0, 0.0);
        fft.inverse(&mut buf);
        for j1 in 0..m {
            for j2 in 0..m {
                let phase = 2.0 * std::f64::consts::PI * (j1 + 2 * j2) as f64 / m as f64;
                let expect = Complex64::new(phase.cos(), phase.sin());
                assert!((buf[j1 * m + j2] - expect).norm() < 1e-13);
            }
        }
    }
}
