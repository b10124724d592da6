use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use msgnn::error::Error;
use msgnn::image::{load_png, procedural_scene, save_png, synth_rain, RainParams};

use crate::Result;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// PNG files directly under `dir`, sorted by name.
pub fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()).into());
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io(dir))? {
        let path = entry.map_err(io(dir))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn synth(clean_dir: &Path, out_dir: &Path, count: usize, base: RainParams) -> Result<()> {
    base.validate()?;
    let sources = png_files(clean_dir)?;
    if sources.is_empty() {
        return Err(Error::Dataset(format!("no png files in {}", clean_dir.display())).into());
    }
    let count = if count == 0 { sources.len() } else { count };
    let mut manifest = String::new();
    for i in 0..count {
        let clean = load_png(&sources[i % sources.len()])?;
        let params = RainParams {
            seed: base.seed.wrapping_add(i as u64),
            ..base
        };
        let (rainy, _) = synth_rain(&clean, &params)?;
        let name = format!("{i:04}");
        save_png(&rainy, out_dir.join("rain").join(format!("{name}.png")))?;
        save_png(&clean, out_dir.join("norain").join(format!("{name}.png")))?;
        writeln!(
            manifest,
            "{name}\t{}\t{}\t{}\t{}\t{}",
            params.density, params.angle_deg, params.length_px, params.intensity, params.seed
        )
        .expect("writing to a string");
    }
    let path = out_dir.join("manifest.tsv");
    std::fs::write(&path, manifest).map_err(io(&path))?;
    log::info!("wrote {count} pairs to {}", out_dir.display());
    Ok(())
}

pub fn gen_clean(out_dir: &Path, count: usize, size: usize, seed: u64) -> Result<()> {
    if count == 0 || size < 4 {
        return Err(Error::Contract("gen-clean needs count >= 1 and size >= 4".into()).into());
    }
    for i in 0..count {
        let scene = procedural_scene(size, size, seed.wrapping_mul(1000).wrapping_add(i as u64));
        save_png(&scene, out_dir.join(format!("{i:04}.png")))?;
    }
    log::info!("wrote {count} clean scenes to {}", out_dir.display());
    Ok(())
}
