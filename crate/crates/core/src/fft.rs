//! Square 2D complex FFTs with a process-wide plan cache.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::{Fft, FftPlanner};

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

static PLANS: Lazy<Mutex<HashMap<usize, Arc<Plans>>>> = Lazy::new(|| Mutex::new(HashMap::new()));

fn plans(n: usize) -> Arc<Plans> {
    let mut cache = PLANS.lock().expect("fft plan cache poisoned");
    cache
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

/// In-place unnormalized 2D transform of a row-major `n x n` buffer.
///
/// `inverse = true` computes `sum_k c_k exp(+i k.x)`, the forward direction
/// uses `exp(-i k.x)`.
pub(crate) fn fft2(data: &mut [Complex64], n: usize, inverse: bool) {
    debug_assert_eq!(data.len(), n * n);
    let p = plans(n);
    let fft = if inverse { &p.inverse } else { &p.forward };
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(data, &mut scratch);
    transpose(data, n);
    fft.process_with_scratch(data, &mut scratch);
    transpose(data, n);
}

fn transpose(data: &mut [Complex64], n: usize) {
    for a in 0..n {
        for b in (a + 1)..n {
            data.swap(a * n + b, b * n + a);
        }
    }
}
