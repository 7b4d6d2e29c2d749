//! Densities of PGM iterates on 1D nonnegative deconvolution for several
//! dgfs with a common step, at k = 0, 6, 6^2, 6^3, 6^4.
//!
//! cargo run --release --example density_snapshots [out.csv]

use measure_pgm::dgf::Dgf;
use measure_pgm::grid::Grid;
use measure_pgm::objective::{deconv_problem, Regularizer};
use measure_pgm::solver::{run_pgm, Method, SolverConfig};
use measure_pgm::trace::{columns_csv, write_atomic};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Grid::torus(1, 300)?;
    let problem = deconv_problem(&grid, Regularizer::NonnegPlusTv { lambda: 0.0 })?;
    let ks = vec![0, 6, 36, 216, 1296];
    let step = 0.005;
    let f0 = vec![1.0; grid.len()];

    let mut header = vec!["x".to_string()];
    let mut columns: Vec<Vec<f64>> = vec![grid.points().map(|p| p[0]).collect()];
    for dgf in [Dgf::power(2.0)?, Dgf::power(1.5)?, Dgf::Entropy] {
        let config = SolverConfig::new(Method::Pgm, 1296).with_step(step).with_snapshots(ks.clone());
        let trace = run_pgm(&problem, &dgf, &f0, &config)?;
        for (k, f) in &trace.snapshots {
            let mass_near_zero: f64 = grid
                .points()
                .zip(grid.weights())
                .zip(f)
                .filter(|((p, _), _)| grid.dist(p, &[0.0]) <= 0.05)
                .map(|((_, w), fj)| w * fj)
                .sum();
            println!(
                "{dgf:<6} k={k:<5} max f = {:>10.3}  mass within 0.05 of the spike = {mass_near_zero:.4}",
                f.iter().copied().fold(f64::MIN, f64::max)
            );
            header.push(format!("{dgf}_k{k}"));
            columns.push(f.clone());
        }
    }
    if let Some(path) = std::env::args().nth(1) {
        let rows: Vec<Vec<f64>> = (0..grid.len()).map(|j| columns.iter().map(|c| c[j]).collect()).collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_atomic(path.as_ref(), &columns_csv(&header, &rows))?;
        println!("wrote {path}");
    }
    Ok(())
}
