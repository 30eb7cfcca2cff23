// Builds a two-layer scene, renders it in both modes and writes the
// scene, the renders and the composite weights.
//
// ```text
// cargo run --release --example render_scene -- [OUT_DIR]
// ```

use std::error::Error;
use std::path::{Path, PathBuf};

use layered_bokeh::io::{save_color_png, save_scene, write_pfm};
use layered_bokeh::oracle::{ShapeSpec, TextureSpec};
use layered_bokeh::render::{alpha_over, render};
use layered_bokeh::{ImageBuffer, Layer, LayeredScene, LensConfig, RenderMode};

pub fn run(out: &Path, size: usize) -> Result<(), Box<dyn Error>> {
    let here = Path::new(".");
    let front = Layer::new(
        TextureSpec::Checker {
            cells: 6,
            a: [0.9, 0.75, 0.2],
            b: [0.6, 0.1, 0.1],
        }
        .render(size, size, here)?,
        ShapeSpec::Disk {
            center: [0.4, 0.45],
            radius: 0.22,
        }
        .render(size, size, here)?,
        ImageBuffer::filled(size, size, 1, 0.6),
    );
    let back = Layer::opaque(
        TextureSpec::Noise { cells: 8, seed: 3 }.render(size, size, here)?,
        ImageBuffer::filled(size, size, 1, 0.1),
    );
    let scene = LayeredScene::new(vec![front, back]);

    // focus on the background; the disk is blurred by 8 * 0.5 = 4 px
    let lens = LensConfig::new(0.1, 8.0, RenderMode::Soft);
    save_scene(&out.join("scene"), &scene, &lens)?;
    save_color_png(&out.join("pinhole.png"), &alpha_over(&scene))?;

    for mode in [RenderMode::Soft, RenderMode::Hard] {
        let lens = lens.clone().with_mode(mode);
        let result = render(&scene, &lens)?;
        let name = format!("{mode:?}").to_lowercase();
        save_color_png(&out.join(format!("bokeh_{name}.png")), &result.bokeh)?;
        for (i, c) in result.composite_weights.iter().enumerate() {
            write_pfm(&out.join(format!("{name}_weight_{i}.pfm")), c)?;
        }
        println!(
            "{name}: radius {} written to {}",
            result.radius,
            out.display()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let out = std::env::args().nth(1).map_or_else(
        || PathBuf::from("target/examples/render_scene"),
        PathBuf::from,
    );
    run(&out, 192)
}
