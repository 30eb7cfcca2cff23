// Ray traces a small billboard benchmark through a thick spherical lens,
// then scores the layered renderer and the flattened baseline against it.
//
// ```text
// cargo run --release --example ray_traced_benchmark -- [OUT_DIR] [SPP]
// ```

use std::error::Error;
use std::path::{Path, PathBuf};

use layered_bokeh::oracle::{
    blur_scale, disparity_at, evaluate_dataset, focus_distance, generate_benchmark, Recipe,
};

const RECIPE: &str = r#"
[lens]
sphere_radius = 20.0
aperture_radius = 1.0
image_plane_distance = 27.0
fov = 20.0
sensor_resolution = [64, 64]
samples_per_pixel = 128
rng_seed = 11

[[scene]]
name = "disk_before_focus"
[[scene.layer]]
distance = 30.0
color = { kind = "checker", cells = 4, a = [0.9, 0.8, 0.2], b = [0.3, 0.1, 0.1] }
shape = { kind = "disk", center = [0.45, 0.5], radius = 0.22 }
[[scene.layer]]
distance = 55.0
color = { kind = "noise", cells = 8, seed = 5 }

[[scene]]
name = "star_in_focus"
focus_distance = 32.0
[[scene.layer]]
distance = 32.0
color = { kind = "solid", color = [0.95, 0.95, 0.9] }
shape = { kind = "star", center = [0.5, 0.5], outer = 0.3, inner = 0.14, points = 5 }
[[scene.layer]]
distance = 80.0
color = { kind = "checker", cells = 6, a = [0.1, 0.5, 0.8], b = [0.8, 0.3, 0.1] }
"#;

pub fn run(out: &Path, spp: usize) -> Result<(), Box<dyn Error>> {
    let mut recipe = Recipe::parse(RECIPE, Path::new("recipe.toml"))?;
    recipe.lens.samples_per_pixel = spp;
    let cfg = &recipe.lens;
    println!(
        "in focus at {:.2}, blur scale {:.2} px per unit disparity",
        focus_distance(cfg)?,
        blur_scale(cfg)?
    );
    for d in [30.0, 55.0, 80.0] {
        println!(
            "  distance {d:>4} -> disparity {:.5}",
            disparity_at(cfg, d)?
        );
    }

    generate_benchmark(&recipe, Path::new("."), out)?;
    let report = evaluate_dataset(out)?;
    print!("{}", report.to_csv());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map_or_else(
        || PathBuf::from("target/examples/ray_traced_benchmark"),
        PathBuf::from,
    );
    let spp = args.next().map(|s| s.parse()).transpose()?.unwrap_or(512);
    run(&out, spp)
}
