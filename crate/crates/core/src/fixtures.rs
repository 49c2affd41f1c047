//! Small reference problems with known verdicts.

use nalgebra::dmatrix;

use crate::linalg::Matrix;
use crate::problem::{simulate, DataSet, SystemStructure};

/// Two states, one input, one output, process noise along `e1`.
pub fn two_state() -> (SystemStructure, DataSet) {
    let sys = SystemStructure::new(
        dmatrix![0.0; 1.0],
        dmatrix![1.0, 0.0],
        dmatrix![0.0],
        dmatrix![1.0; 0.0],
        dmatrix![0.0],
    )
    .expect("valid structure");
    let data = DataSet::new(
        dmatrix![1.0, 1.0],
        dmatrix![0.0, 0.0, 2.0; 0.0, 1.0, 1.0],
        dmatrix![0.0, 0.0],
    )
    .expect("valid data");
    (sys, data)
}

/// [`two_state`] with `C = (0 1)` and the matching outputs.
pub fn two_state_swapped_c() -> (SystemStructure, DataSet) {
    let (mut sys, mut data) = two_state();
    sys.c = dmatrix![0.0, 1.0];
    data.y_minus = dmatrix![0.0, 1.0];
    (sys, data)
}

pub fn two_state_true_a() -> Matrix {
    dmatrix![0.0, 1.0; 2.0, 0.0]
}

/// Four-state shift register.
pub fn chain_true_a() -> Matrix {
    dmatrix![
        0.0, 1.0, 0.0, 0.0;
        0.0, 0.0, 1.0, 0.0;
        0.0, 0.0, 0.0, 1.0;
        0.0, 0.0, 0.0, 0.0
    ]
}

/// Shift register with `B = e_i` (`i` in 1..=4), process noise along `e4`,
/// data simulated from `x(0) = e4` with inputs `(0, 0, 4)` and zero noise.
pub fn chain(i: usize) -> (SystemStructure, DataSet) {
    assert!((1..=4).contains(&i), "chain: i must be in 1..=4");
    let mut b = Matrix::zeros(4, 1);
    b[(i - 1, 0)] = 1.0;
    let sys = SystemStructure::new(
        b,
        dmatrix![1.0, 0.0, 0.0, 0.0],
        dmatrix![0.0],
        dmatrix![0.0; 0.0; 0.0; 1.0],
        dmatrix![0.0],
    )
    .expect("valid structure");
    let data = simulate(
        &chain_true_a(),
        &sys,
        &dmatrix![0.0; 0.0; 0.0; 1.0],
        &dmatrix![0.0, 0.0, 4.0],
        &Matrix::zeros(1, 3),
    )
    .expect("valid simulation");
    (sys, data)
}
