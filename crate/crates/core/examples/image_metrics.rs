// Image quality metrics between two PNGs, or between a synthetic image and
// progressively degraded copies of it.
//
// ```text
// cargo run --release --example image_metrics -- [PRED.png TARGET.png]
// ```

use std::error::Error;
use std::path::Path;

use layered_bokeh::io::load_color_png;
use layered_bokeh::metrics::MetricRow;
use layered_bokeh::oracle::TextureSpec;

fn print_row(name: &str, r: &MetricRow) {
    println!(
        "{name:<14} rmse {:.4}  rmse_s {:.4}  ssim {:.4}  psnr {:6.2}  zncc {:.4}",
        r.rmse, r.rmse_s, r.ssim, r.psnr, r.zncc
    );
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let target = TextureSpec::Noise { cells: 10, seed: 1 }.render(96, 96, Path::new("."))?;
    print_row("identical", &MetricRow::compute(&target, &target)?);
    // a pure gain change is forgiven by rmse_s and zncc
    print_row(
        "gain 0.8",
        &MetricRow::compute(&target.map(|v| 0.8 * v), &target)?,
    );
    for amount in [0.02, 0.05, 0.1] {
        let noisy = {
            let mut b = target.clone();
            for (i, v) in b.data_mut().iter_mut().enumerate() {
                *v += amount * (((i * 7919) % 13) as f64 / 6.0 - 1.0);
            }
            b
        };
        print_row(
            &format!("noise {amount}"),
            &MetricRow::compute(&noisy, &target)?,
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [pred, target] = args.as_slice() {
        let row = MetricRow::compute(
            &load_color_png(Path::new(pred))?,
            &load_color_png(Path::new(target))?,
        )?;
        print_row(pred, &row);
        return Ok(());
    }
    run()
}
