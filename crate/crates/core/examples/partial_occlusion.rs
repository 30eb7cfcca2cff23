// A defocused foreground edge over an in-focus background. Along the
// edge the layered render mixes the blurred foreground with the
// background it half-covers; flattening the layers first cannot, because
// the hidden background is gone.
//
// ```text
// cargo run --release --example partial_occlusion -- [OUT_DIR]
// ```

use std::error::Error;
use std::path::{Path, PathBuf};

use layered_bokeh::io::save_color_png;
use layered_bokeh::render::{render, render_naive};
use layered_bokeh::{ImageBuffer, Layer, LayeredScene, LensConfig, RenderMode};

pub fn run(out: &Path, size: usize) -> Result<(), Box<dyn Error>> {
    let edge = size / 2;
    let front = Layer::new(
        ImageBuffer::from_fn(size, size, 3, |_, _, c| [0.1, 0.2, 0.9][c]),
        ImageBuffer::from_fn(size, size, 1, |x, _, _| if x < edge { 1.0 } else { 0.0 }),
        ImageBuffer::filled(size, size, 1, 0.8),
    );
    let back = Layer::opaque(
        ImageBuffer::from_fn(size, size, 3, |x, y, c| {
            let stripe = ((x / 4 + y / 4) % 2) as f64;
            [0.9, 0.8 * stripe, 0.2][c]
        }),
        ImageBuffer::filled(size, size, 1, 0.0),
    );
    let scene = LayeredScene::new(vec![front, back]);
    let lens = LensConfig::new(0.0, 10.0, RenderMode::Hard);

    let layered = render(&scene, &lens)?;
    let naive = render_naive(&scene, &lens)?;
    save_color_png(&out.join("layered.png"), &layered.bokeh)?;
    save_color_png(&out.join("flattened.png"), &naive.bokeh)?;

    let y = size / 2;
    println!("  x   c_front  c_back   sum");
    for x in edge.saturating_sub(10)..(edge + 10).min(size) {
        let cf = layered.composite_weights[0].get(x, y, 0);
        let cb = layered.composite_weights[1].get(x, y, 0);
        println!("{x:>3}  {cf:7.4}  {cb:7.4}  {:7.4}", cf + cb);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let out = std::env::args().nth(1).map_or_else(
        || PathBuf::from("target/examples/partial_occlusion"),
        PathBuf::from,
    );
    run(&out, 96)
}
