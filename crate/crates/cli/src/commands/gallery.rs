//! `gradlens gallery`: side-by-side original/reconstruction composites
//! and an SVG contact sheet, rendered from a completed attack run
//! without recomputing anything.

use gradlens_core::imaging::{read_image, write_image, Image};
use gradlens_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::csvio::read_matches;
use crate::svg::{contact_sheet, SheetEntry};

use super::{image_ext, write_stage};

/// Read `cfg.out` (a finished attack run) and write `gallery/` inside
/// it: one composite image per original plus `sheet.svg`.
pub fn cmd_gallery(cfg: &ExperimentConfig) -> Result<()> {
    let run_dir = &cfg.out;
    if !run_dir.join("matches.csv").exists() {
        return Err(Error::Config(format!(
            "{} is not a completed attack run (no matches.csv)",
            run_dir.display()
        )));
    }
    let rows = read_matches(run_dir.join("matches.csv"))?;
    let ext = image_ext(cfg.channels);
    let mut entries = Vec::with_capacity(rows.len());
    let mut pairs = Vec::with_capacity(rows.len());
    for row in &rows {
        let original = read_image(
            run_dir
                .join("originals")
                .join(format!("u{}_{:02}.{ext}", row.user, row.original)),
        )?;
        let recon = match row.reconstruction {
            Some(idx) => Some(read_image(
                run_dir
                    .join("recons")
                    .join(format!("u{}_r{idx:02}.{ext}", row.user)),
            )?),
            None => None,
        };
        let caption = match row.reconstruction {
            Some(_) => format!(
                "u{} original {}: {:.1} dB",
                row.user, row.original, row.psnr_db
            ),
            None => format!("u{} original {}: no match", row.user, row.original),
        };
        pairs.push((
            format!("pair_u{}_{:02}.{ext}", row.user, row.original),
            compose_pair(&original, recon.as_ref())?,
        ));
        entries.push(SheetEntry {
            original,
            reconstruction: recon,
            caption,
        });
    }
    let sheet = contact_sheet(&entries, 16);
    write_stage(&run_dir.join("gallery"), |dir| {
        for (name, img) in &pairs {
            write_image(img, dir.join(name))?;
        }
        std::fs::write(dir.join("sheet.svg"), &sheet)?;
        Ok(())
    })?;
    println!(
        "wrote {}: {} pairs",
        run_dir.join("gallery").display(),
        pairs.len()
    );
    Ok(())
}

/// Original and reconstruction side by side with a mid-gray separator
/// column; just the original when there is no reconstruction.
pub fn compose_pair(original: &Image, recon: Option<&Image>) -> Result<Image> {
    let Some(recon) = recon else {
        return Ok(original.clone());
    };
    let (w, h, ch) = original.shape();
    if recon.shape() != (w, h, ch) {
        return Err(Error::Dimension {
            context: "compose_pair",
            expected: format!("{:?}", original.shape()),
            got: format!("{:?}", recon.shape()),
        });
    }
    let left = original.pixels();
    let right = recon.pixels();
    let out_w = 2 * w + 1;
    let mut pixels = vec![0.5f64; out_w * h * ch];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                pixels[(y * out_w + x) * ch + c] = left[(y * w + x) * ch + c];
                pixels[(y * out_w + w + 1 + x) * ch + c] = right[(y * w + x) * ch + c];
            }
        }
    }
    Image::new(out_w, h, ch, pixels)
}
