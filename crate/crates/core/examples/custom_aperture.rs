// Small bright spots rendered through a circular and a star-shaped
// aperture. Out-of-focus highlights take the aperture's shape.
//
// ```text
// cargo run --release --example custom_aperture -- [OUT_DIR]
// ```

use std::error::Error;
use std::path::{Path, PathBuf};

use layered_bokeh::fixtures::{spots_scene, spots_star_lens, star_kernel, STAR_KERNEL_SIZE};
use layered_bokeh::io::{save_color_png, save_gray_png};
use layered_bokeh::render::render;
use layered_bokeh::ImageBuffer;

pub fn run(out: &Path) -> Result<(), Box<dyn Error>> {
    let (scene, circle) = spots_scene();
    let star = spots_star_lens();

    let k = star_kernel(STAR_KERNEL_SIZE);
    save_gray_png(
        &out.join("star.png"),
        &ImageBuffer::from_vec(k.size(), k.size(), 1, k.values().to_vec())?,
    )?;
    for (name, lens) in [("circle", &circle), ("star", &star)] {
        let b = render(&scene, lens)?.bokeh;
        save_color_png(&out.join(format!("spots_{name}.png")), &b)?;
        // the first spot sits at (12, 12); print its highlight
        let peak = (2..23)
            .flat_map(|y| (2..23).map(move |x| (x, y)))
            .fold(0.0_f64, |m, (x, y)| m.max(b.get(x, y, 0)));
        println!("{name}:");
        for y in 2..23 {
            let row: String = (2..23)
                .map(|x| {
                    if b.get(x, y, 0) > 0.5 * peak {
                        '#'
                    } else {
                        '.'
                    }
                })
                .collect();
            println!("  {row}");
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let out = std::env::args().nth(1).map_or_else(
        || PathBuf::from("target/examples/custom_aperture"),
        PathBuf::from,
    );
    run(&out)
}
