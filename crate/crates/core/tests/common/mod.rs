#![allow(dead_code)]

/// Dense Gaussian elimination with partial pivoting. Independent of the
/// tracking solver; used to derive reference solutions.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| row.iter().copied().chain(std::iter::once(bi)).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        assert!(m[col][col].abs() > 1e-12, "singular system");
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            let (upper, lower) = m.split_at_mut(row);
            for (dst, src) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *dst -= f * src;
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| m[row][c] * x[c]).sum();
        x[row] = (m[row][n] - s) / m[row][row];
    }
    x
}

/// Solution of the three-unknown demo system, frozen from [`gauss_solve`].
pub const DEMO_SOLUTION: [f64; 3] = [0.5, 0.1, 0.8];

/// Settling budgets (iterations after each segment start), frozen at twice
/// the measured settling time with tol = 0.01.
/// Measured: fig4 1978; fig5 1978/15/32; fig6 1978/71; fig7 1878/22/33/32.
pub fn settling_budget(name: &str) -> &'static [u64] {
    match name {
        "fig4" => &[3956],
        "fig5" => &[3956, 30, 64],
        "fig6" => &[3956, 142],
        "fig7" => &[3756, 44, 66, 64],
        _ => panic!("no budget for {name}"),
    }
}

/// Measured 3338 iterations for `linsolve3`.
pub const LINSOLVE3_BUDGET: u64 = 6676;

pub fn exact_filter_response(x0: f64, input: f64, t: f64, tau: f64) -> f64 {
    input + (x0 - input) * (-t / tau).exp()
}
