//! Named games. Matrices are stored as printed: row index is the first
//! agent's action, column index the second's.

use crate::envfile::DEFAULT_MATRIX_GAMMA;
use crate::error::{Error, Result};
use crate::model::Mmdp;

pub const TABLE1: [[f64; 3]; 3] = [[10., -30., -30.], [-30., 5., -30.], [-30., -30., 1.]];

pub const MATGAME2: [[f64; 2]; 2] = [[-20., 10.], [10., 9.]];

/// The ten 5x5 matrices of the multi-task game; each has optimum 10.
pub const MULTITASK: [[[f64; 5]; 5]; 10] = [
    [
        [10., -10., -10., -10., -10.],
        [-10., 9., 0., 0., 0.],
        [-10., 0., 9., 0., 0.],
        [-10., 0., 0., 9., 0.],
        [-10., 0., 0., 0., 9.],
    ],
    [
        [10., -10., 10., -10., 10.],
        [-10., 10., -10., 10., -10.],
        [10., -10., 10., -10., 10.],
        [-10., 10., -10., 10., -10.],
        [10., -10., 10., -10., 10.],
    ],
    [
        [-20., -20., -20., -20., 10.],
        [-20., -20., -20., 10., 9.],
        [-20., -20., 10., 9., 9.],
        [-20., 10., 9., 9., 9.],
        [10., 9., 9., 9., 9.],
    ],
    [
        [-20., -20., -20., -20., 10.],
        [-20., -20., -20., 10., 9.],
        [-20., -20., 10., 9., 8.],
        [-20., 10., 9., 8., 7.],
        [10., 9., 8., 7., 6.],
    ],
    [
        [-20., -15., -10., -5., 6.],
        [-20., -15., -10., 7., 5.],
        [-20., -15., 8., 6., 4.],
        [-20., 9., 7., 5., 3.],
        [10., 8., 6., 4., 2.],
    ],
    [
        [0.8, -16.0, -5.0, -10.9, -3.7],
        [-9.2, -4.2, 7.3, 9.6, -3.0],
        [-20.0, -18.1, 0.2, -4.3, 9.0],
        [-14.9, -2.0, -17.7, -17.6, -0.8],
        [3.8, 10., 7.5, 9.2, -10.7],
    ],
    [
        [-14.4, -15.8, 1.5, -5.4, 10.],
        [-13.2, 5.8, -8.7, -2.2, -18.2],
        [-5.9, -19.0, -0.7, -2.0, -19.5],
        [0.8, 4.7, -14.8, 2.5, -4.1],
        [-11.3, -8.2, -20.0, -17.3, -17.6],
    ],
    [
        [-1.4, -19.2, 7.2, -5.5, 7.4],
        [-18.5, -20.0, -14.4, -17.6, -5.1],
        [3.6, 5.5, 10., -13.3, -4.9],
        [9.8, -12.3, 0.6, -16.5, -13.0],
        [-11.8, -20.0, -2.4, 7.1, -2.3],
    ],
    [
        [-4.5, -5.2, -8.4, -8.9, 5.5],
        [-12.4, -9.5, 8.8, 5.4, 4.4],
        [-4.6, 1.3, 5.5, 7.3, -6.8],
        [9.0, -18.7, -18.2, -13.7, -8.2],
        [2.2, -9.1, 10., 7.1, -20.0],
    ],
    [
        [-8.4, -1.8, -20.0, 7.3, -3.0],
        [-8.7, 1.7, 4.8, 2.0, -7.8],
        [-13.3, -3.2, 0.7, -1.8, -10.7],
        [9.8, -12.3, 0.6, -16.5, -13.0],
        [1.8, 2.9, -1.1, 10., 8.2],
    ],
];

pub fn builtin_names() -> Vec<String> {
    let mut names = vec!["table1".to_string(), "matgame2".to_string()];
    names.extend((1..=10).map(|i| format!("multitask_{i}")));
    names.push("multitask_suite".to_string());
    names
}

fn flatten<const K: usize>(rows: &[[f64; K]; K]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

/// One state per matrix, drawn uniformly at the start; the episode ends
/// after a single joint action. The state (matrix id) is observed.
pub fn multitask_suite() -> Mmdp {
    let ns = MULTITASK.len();
    let nj = 25;
    let reward: Vec<f64> = MULTITASK.iter().flat_map(flatten).collect();
    Mmdp::new(
        ns,
        2,
        5,
        vec![1.0 / ns as f64; ns * nj * ns],
        reward,
        DEFAULT_MATRIX_GAMMA,
        vec![1.0 / ns as f64; ns],
        Some(1),
    )
    .expect("multi-task suite is a valid model")
}

pub fn builtin_game(name: &str) -> Result<Mmdp> {
    let game = |n_actions, payoff| Mmdp::matrix_game(2, n_actions, payoff, DEFAULT_MATRIX_GAMMA);
    match name {
        "table1" => game(3, flatten(&TABLE1)),
        "matgame2" => game(2, flatten(&MATGAME2)),
        "multitask_suite" => Ok(multitask_suite()),
        _ => {
            let idx = name
                .strip_prefix("multitask_")
                .and_then(|i| i.parse::<usize>().ok())
                .filter(|i| (1..=MULTITASK.len()).contains(i))
                .ok_or_else(|| Error::UnknownEnv(name.to_string()))?;
            game(5, flatten(&MULTITASK[idx - 1]))
        }
    }
}
