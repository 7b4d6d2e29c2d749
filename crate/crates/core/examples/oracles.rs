//! Every independent oracle (gradients, closed-form iterates, KKT residuals,
//! strong convexity, momentum sequence, mirror flows), then the same suite
//! with faults injected to show they are caught.
//!
//! cargo run --release --example oracles

use measure_pgm::verify::{run_all, DebugHooks};

fn main() {
    let results = run_all(&DebugHooks::default());
    for r in &results {
        println!("{r}");
    }
    let hooks = DebugHooks { flip_gradient_sign: true, kappa_tol: Some(1e-2) };
    let caught = run_all(&hooks).into_iter().filter(|r| !r.passed).count();
    println!("with a flipped gradient sign and kappa tolerance 1e-2: {caught} checks fail");
}
