//! Convergence rates of PGM and APGM on sparse deconvolution, compared with
//! the predicted exponents.
//!
//! cargo run --release --example deconv_rates -- [dim=1|2] [nonneg|signed] [iters]

use measure_pgm::analysis::{fit_rate, theoretical_exponent, FitWindow};
use measure_pgm::dgf::{Dgf, DEFAULT_HYP_BETA};
use measure_pgm::grid::Grid;
use measure_pgm::objective::{deconv_problem, Regularizer};
use measure_pgm::solver::{run, Method, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dim: usize = args.first().map_or(Ok(1), |s| s.parse())?;
    let signed = args.get(1).is_some_and(|s| s == "signed");
    let iters: usize = args.get(2).map_or(Ok(100_000), |s| s.parse())?;

    let grid = Grid::torus(dim, if dim == 1 { 300 } else { 60 })?;
    let (reg, low) = if signed {
        (Regularizer::Tv { lambda: 0.05 }, Dgf::hyperbolic(DEFAULT_HYP_BETA)?)
    } else {
        (Regularizer::NonnegPlusTv { lambda: 0.0 }, Dgf::Entropy)
    };
    let problem = deconv_problem(&grid, reg)?;
    let f0 = vec![1.0; grid.len()];
    println!("{} with {reg}: setting {} (q = {}), inf = {:e}", problem.name, problem.setting, problem.setting.q(), problem.inf_value.unwrap_or(f64::NAN));

    for method in [Method::Pgm, Method::Apgm] {
        for dgf in [Dgf::power(2.0)?, Dgf::power(1.5)?, low] {
            let trace = run(&problem, &dgf, &f0, &SolverConfig::new(method, iters))?;
            let model = theoretical_exponent(method, &dgf, problem.setting.q(), dim)?;
            let window = FitWindow { k_lo: 1000, strip_log: model.log_factor, gap_floor: 1e-13, ..FitWindow::default() };
            let fit = fit_rate(&trace, &window).map(|f| format!("{:.3} on [{}, {}]", f.slope, f.k_first, f.k_last));
            println!(
                "{method:<4} {dgf:<10} final gap {:.3e}  fitted {}  predicted {:.3}{}",
                trace.last().and_then(|r| r.gap).unwrap_or(f64::NAN),
                fit.unwrap_or_else(|e| format!("n/a ({e})")),
                model.exponent,
                if model.log_factor { " (log k stripped)" } else { "" }
            );
            for w in &trace.warnings {
                println!("     warning: {w}");
            }
        }
    }
    Ok(())
}
