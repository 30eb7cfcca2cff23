// Analytic gradients of a loss through the renderer, checked against
// central finite differences.
//
// ```text
// cargo run --release --example gradient_check
// ```

use std::error::Error;
use std::path::Path;

use layered_bokeh::fixtures::gradcheck_scene;
use layered_bokeh::render::{backward, gradcheck, render, GradcheckConfig};
use layered_bokeh::ImageBuffer;

pub fn run(_out: &Path) -> Result<(), Box<dyn Error>> {
    let (scene, lens) = gradcheck_scene();

    // L = mean squared distance to a flat grey target
    let out = render(&scene, &lens)?;
    let n = out.bokeh.data().len() as f64;
    let upstream = out.bokeh.map(|v| 2.0 * (v - 0.5) / n);
    let grads = backward(&scene, &lens, &out, &upstream)?;
    let norm = |b: &ImageBuffer| b.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    let g = &grads.layers[0];
    println!(
        "|dL/dI| = {:.3e}  |dL/dd| = {:.3e}  |dL/da| = {:.3e}",
        norm(&g.color),
        norm(&g.disparity),
        norm(&g.alpha)
    );

    let report = gradcheck(&scene, &lens, &GradcheckConfig::default())?;
    for f in &report.families {
        println!(
            "{:<9} checked {:>4}  max rel {:.2e}  median rel {:.2e}  within tol {:.4}",
            f.family.name(),
            f.checked,
            f.max_rel,
            f.median_rel,
            f.within_tol
        );
    }
    println!("passed: {}", report.passed());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run(Path::new("."))
}
