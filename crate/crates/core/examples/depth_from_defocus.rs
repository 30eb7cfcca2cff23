// Recovers a disparity map from an all-in-focus image and its defocused
// observation by gradient descent through the soft renderer.
//
// ```text
// cargo run --release --example depth_from_defocus -- [OUT_DIR] [ITERATIONS]
// ```

use std::error::Error;
use std::path::{Path, PathBuf};

use layered_bokeh::dfd::{optimize, DfdProblem};
use layered_bokeh::fixtures::two_plane;
use layered_bokeh::io::{save_color_png, write_pfm, write_text};
use layered_bokeh::metrics::{psnr, rmse};
use layered_bokeh::ImageBuffer;

pub fn run(out: &Path, iterations: usize) -> Result<(), Box<dyn Error>> {
    let tp = two_plane();
    let init = ImageBuffer::filled(tp.image.width(), tp.image.height(), 1, tp.init);
    let mut problem = DfdProblem::new(tp.image.clone(), tp.target.clone(), tp.lens.clone(), init);
    problem.optimizer.max_iterations = iterations;

    let result = optimize(&problem)?;
    write_pfm(&out.join("disparity.pfm"), &result.disparity)?;
    save_color_png(&out.join("render.png"), &result.render)?;
    save_color_png(&out.join("target.png"), &tp.target)?;
    write_text(&out.join("loss.csv"), &result.trace_csv())?;

    let half = tp.image.width() / 2;
    let mean = |x0: usize, x1: usize| {
        let d = &result.disparity;
        let (mut s, mut n) = (0.0, 0);
        for y in 0..d.height() {
            for x in x0..x1 {
                s += d.get(x, y, 0);
                n += 1;
            }
        }
        s / n as f64
    };
    println!(
        "iterations {}  best loss {:.5e}",
        result.trace.len(),
        result.best_loss
    );
    println!(
        "mean disparity: left {:.3} (true 0.5), right {:.3} (true 0.0)",
        mean(0, half),
        mean(half, 2 * half)
    );
    println!("disparity rmse {:.4}", rmse(&result.disparity, &tp.truth)?);
    println!("render psnr {:.2} dB", psnr(&result.render, &tp.target)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map_or_else(
        || PathBuf::from("target/examples/depth_from_defocus"),
        PathBuf::from,
    );
    let iterations = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2000);
    run(&out, iterations)
}
