//! Two-layer ReLU network trained over the circle of neuron directions:
//! rates of PGM/APGM for p in {hyp, 1.5, 2} and the regressor at k = 200.
//!
//! cargo run --release --example relu_network -- [iters] [reference_iters]

use measure_pgm::analysis::{fit_rate, theoretical_exponent, FitWindow};
use measure_pgm::dgf::{Dgf, DEFAULT_HYP_BETA};
use measure_pgm::grid::Grid;
use measure_pgm::objective::{relu_problem, relu_regressor, ReluData, DEFAULT_RELU_LAMBDA, DEFAULT_RELU_SAMPLES, DEFAULT_RELU_SEED};
use measure_pgm::registry::estimate_inf;
use measure_pgm::solver::{run, Method, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let iters: usize = args.first().map_or(Ok(100_000), |s| s.parse())?;
    let ref_iters: usize = args.get(1).map_or(Ok(10 * iters), |s| s.parse())?;
    let grid = Grid::circle(2000)?;
    let mut problem = relu_problem(&grid, DEFAULT_RELU_SAMPLES, DEFAULT_RELU_LAMBDA, DEFAULT_RELU_SEED)?;
    let data = ReluData::generate(DEFAULT_RELU_SAMPLES, DEFAULT_RELU_SEED);
    let f0 = vec![1.0; grid.len()];
    let dgfs = [Dgf::hyperbolic(DEFAULT_HYP_BETA)?, Dgf::power(1.5)?, Dgf::power(2.0)?];

    println!("samples (x, y): {:?}", data.x.iter().zip(&data.y).map(|(x, y)| (format!("{x:.2}"), format!("{y:.3}"))).collect::<Vec<_>>());
    for dgf in dgfs {
        let trace = run(&problem, &dgf, &f0, &SolverConfig::new(Method::Pgm, 200))?;
        let pred = relu_regressor(&grid, &trace.final_density, &data.x)?;
        println!("{dgf:<10} regressor at k=200 on the samples: {:?}", pred.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    }

    let inf = estimate_inf(&problem, ref_iters)?;
    problem.inf_value = Some(inf);
    println!("reference optimum {inf:.12e} ({ref_iters} accelerated iterations)");
    for method in [Method::Pgm, Method::Apgm] {
        for dgf in dgfs {
            let trace = run(&problem, &dgf, &f0, &SolverConfig::new(method, iters))?;
            let fit = fit_rate(&trace, &FitWindow::default())?;
            println!(
                "{method:<4} {dgf:<10} fitted {:.3}  predicted {:.3}",
                fit.slope,
                theoretical_exponent(method, &dgf, 1, 1)?.exponent
            );
        }
    }
    Ok(())
}
