//! Dormand–Prince 5(4) embedded pair over a small fixed-size state.

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

/// Fifth-order weights (identical to the last row of `A`).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];

/// `B5 − B4`.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

pub const N: usize = 3;
pub type State = [f64; N];

/// One trial step from `(t, u)` with size `h`. Returns the fifth-order
/// solution and the local error estimate of each component.
pub fn step<F: FnMut(f64, &State) -> State>(rhs: &mut F, t: f64, u: &State, h: f64) -> (State, State) {
    let mut k = [[0.0; N]; 7];
    for s in 0..7 {
        let mut arg = *u;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N {
                    arg[i] += h * a * kj[i];
                }
            }
        }
        k[s] = rhs(t + C[s] * h, &arg);
    }
    let mut out = *u;
    let mut err = [0.0; N];
    for s in 0..7 {
        for i in 0..N {
            out[i] += h * B5[s] * k[s][i];
            err[i] += h * E[s] * k[s][i];
        }
    }
    (out, err)
}

/// Standard step-size update for a fifth-order pair.
pub fn next_h(h: f64, err_norm: f64) -> f64 {
    let fac = if err_norm == 0.0 {
        5.0
    } else {
        (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
    };
    h * fac
}
