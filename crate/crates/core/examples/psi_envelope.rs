//! Upper envelope psi_hat(alpha) = min_eps [gap(f_eps) + alpha D(f_eps, f0)]
//! built from mollified minimizers, and its exponent in alpha.
//!
//! cargo run --release --example psi_envelope -- [grid_n]

use measure_pgm::analysis::{default_eps_grid, fit_loglog, log_space, predicted_alpha_exponent, psi_envelope};
use measure_pgm::dgf::Dgf;
use measure_pgm::grid::Grid;
use measure_pgm::objective::{lb_problem, Setting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map_or(Ok(20_000), |s| s.parse())?;
    let grid = Grid::torus(1, n)?;
    let f0 = vec![1.0; n];
    let alphas = log_space(1e-6, 1e-2, 40);
    for dgf in [Dgf::power(2.0)?, Dgf::power(1.5)?] {
        for setting in [Setting::I, Setting::IStar, Setting::II, Setting::IIStar] {
            let problem = lb_problem(&grid, setting)?;
            let env = psi_envelope(&problem, &dgf, &f0, &alphas, &default_eps_grid(&problem, 30))?;
            let psi: Vec<f64> = env.iter().map(|p| p.psi_hat).collect();
            let fit = fit_loglog(&alphas, &psi)?;
            println!(
                "{dgf:<6} lb:{setting:<3} alpha-exponent {:.3} (predicted {:.3}); eps* from {:.2e} to {:.2e}",
                fit.slope,
                predicted_alpha_exponent(&dgf, setting.q(), 1)?,
                env[0].eps_star,
                env[env.len() - 1].eps_star
            );
        }
    }
    Ok(())
}
