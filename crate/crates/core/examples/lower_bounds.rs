//! The four lower-bound constructions: PGM with the Euclidean dgf from the
//! uniform density matches k^(-q/(d+q)); APGM on setting I matches
//! k^(-2q/(d+q)).
//!
//! cargo run --release --example lower_bounds -- [grid_n] [iters]

use measure_pgm::analysis::{fit_rate, theoretical_exponent, FitWindow};
use measure_pgm::dgf::Dgf;
use measure_pgm::grid::Grid;
use measure_pgm::objective::{lb_problem, Setting};
use measure_pgm::solver::{run, Method, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().map_or(Ok(20_000), |s| s.parse())?;
    let iters: usize = args.get(1).map_or(Ok(100_000), |s| s.parse())?;
    let grid = Grid::torus(1, n)?;
    let f0 = vec![1.0; n];
    let dgf = Dgf::power(2.0)?;

    let cases = [
        (Setting::I, Method::Pgm),
        (Setting::II, Method::Pgm),
        (Setting::IStar, Method::Pgm),
        (Setting::IIStar, Method::Pgm),
        (Setting::I, Method::Apgm),
    ];
    for (setting, method) in cases {
        let problem = lb_problem(&grid, setting)?;
        let budget = if method == Method::Apgm { iters.min(10_000) } else { iters };
        let trace = run(&problem, &dgf, &f0, &SolverConfig::new(method, budget))?;
        let fit = fit_rate(&trace, &FitWindow::default())?;
        let lower = -(setting.q() as f64) / (1.0 + setting.q() as f64);
        let lower = if method == Method::Apgm { 2.0 * lower } else { lower };
        let upper = theoretical_exponent(method, &dgf, setting.q(), 1)?.exponent;
        println!(
            "lb:{setting:<3} {method:<4} fitted {:.3} on [{}, {}]  lower-bound exponent {lower:.3}  upper-bound exponent {upper:.3}",
            fit.slope, fit.k_first, fit.k_last
        );
    }
    Ok(())
}
