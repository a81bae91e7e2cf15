//! SVG 1.1 contact sheets: original/reconstruction pairs rendered as
//! per-pixel rectangles, one captioned row per pair.

use gradlens_core::imaging::{quantize, Image};

/// One row of the sheet.
pub struct SheetEntry {
    pub original: Image,
    pub reconstruction: Option<Image>,
    pub caption: String,
}

const CAPTION_HEIGHT: usize = 14;
const MARGIN: usize = 8;
const GAP: usize = 8;

/// Render `entries` as one SVG document, `scale` screen pixels per image
/// pixel. Entries may differ in shape; rows size themselves. When no
/// entry has a reconstruction the sheet carries a notice saying so.
pub fn contact_sheet(entries: &[SheetEntry], scale: usize) -> String {
    let scale = scale.max(1);
    let mut rows = String::new();
    let mut width = 0usize;
    let mut y = MARGIN;
    for entry in entries {
        let (w, h, _) = entry.original.shape();
        let mut x = MARGIN;
        draw_image(&mut rows, &entry.original, x, y, scale);
        x += w * scale + GAP;
        if let Some(recon) = &entry.reconstruction {
            let (rw, _, _) = recon.shape();
            draw_image(&mut rows, recon, x, y, scale);
            x += rw * scale + GAP;
        }
        let text_y = y + h * scale + CAPTION_HEIGHT - 3;
        rows.push_str(&format!(
            "  <text x=\"{MARGIN}\" y=\"{text_y}\" font-family=\"monospace\" font-size=\"10\">{}</text>\n",
            escape(&entry.caption)
        ));
        width = width.max(x);
        y += h * scale + CAPTION_HEIGHT + GAP;
    }
    if entries.iter().all(|e| e.reconstruction.is_none()) {
        rows.push_str(&format!(
            "  <text x=\"{MARGIN}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\">no reconstructions: originals only</text>\n",
            y + CAPTION_HEIGHT - 3
        ));
        y += CAPTION_HEIGHT + GAP;
        width = width.max(MARGIN + 220);
    }
    let total_w = width + MARGIN;
    let total_h = y + MARGIN;
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{total_w}\" height=\"{total_h}\" shape-rendering=\"crispEdges\">\n\
         {rows}</svg>\n"
    )
}

fn draw_image(out: &mut String, img: &Image, ox: usize, oy: usize, scale: usize) {
    let (w, h, ch) = img.shape();
    let px = img.pixels();
    for row in 0..h {
        for col in 0..w {
            let base = (row * w + col) * ch;
            let (r, g, b) = if ch == 3 {
                (
                    quantize(px[base]),
                    quantize(px[base + 1]),
                    quantize(px[base + 2]),
                )
            } else {
                let v = quantize(px[base]);
                (v, v, v)
            };
            out.push_str(&format!(
                "  <rect x=\"{}\" y=\"{}\" width=\"{scale}\" height=\"{scale}\" fill=\"#{r:02x}{g:02x}{b:02x}\"/>\n",
                ox + col * scale,
                oy + row * scale,
            ));
        }
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
