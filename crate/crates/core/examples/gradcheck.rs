//! Compare analytic gradients with central finite differences for every
//! parameter array, with and without the global vector.

use emi_core::gradcheck::{run_gradcheck, GradcheckConfig};

fn main() -> emi_core::Result<()> {
    let cfg = GradcheckConfig::default();
    let report = run_gradcheck(&cfg)?;
    println!("{:<8} {:<9} {:>7} {:>12} {:>14} {:>14}", "global", "array", "scalars", "rel err", "analytic", "numeric");
    for c in &report.checks {
        println!(
            "{:<8} {:<9} {:>7} {:>12.3e} {:>14.6e} {:>14.6e}",
            c.use_global_vector, c.array, c.scalars, c.worst_rel_err, c.analytic, c.numeric
        );
    }
    println!("passed (tolerance {:e}): {}", report.tolerance, report.passed());

    let broken = run_gradcheck(&GradcheckConfig {
        corrupt_array: Some("lstm1.u".into()),
        ..cfg
    })?;
    match broken.into_result() {
        Ok(_) => println!("corrupted gradient went unnoticed"),
        Err(e) => println!("corrupted gradient: {e}"),
    }
    Ok(())
}
