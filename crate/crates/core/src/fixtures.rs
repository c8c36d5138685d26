//! Synthetic placeholder catalogs.
//!
//! Each tile is a solid-color PNG with the category name stamped on it in a
//! blocky 3x5 font, so the whole pipeline can run without a real image set.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::json;

pub const TILE_SIZE: u32 = 96;
const SCALE: u32 = 3;

pub const DEFAULT_CATEGORIES: &[&str] = &["cat", "dog", "car", "tree"];

fn glyph(c: char) -> [u8; 5] {
    match c.to_ascii_uppercase() {
        'A' => [0b010, 0b101, 0b111, 0b101, 0b101],
        'B' => [0b110, 0b101, 0b110, 0b101, 0b110],
        'C' => [0b011, 0b100, 0b100, 0b100, 0b011],
        'D' => [0b110, 0b101, 0b101, 0b101, 0b110],
        'E' => [0b111, 0b100, 0b110, 0b100, 0b111],
        'F' => [0b111, 0b100, 0b110, 0b100, 0b100],
        'G' => [0b011, 0b100, 0b101, 0b101, 0b011],
        'H' => [0b101, 0b101, 0b111, 0b101, 0b101],
        'I' => [0b111, 0b010, 0b010, 0b010, 0b111],
        'J' => [0b001, 0b001, 0b001, 0b101, 0b010],
        'K' => [0b101, 0b101, 0b110, 0b101, 0b101],
        'L' => [0b100, 0b100, 0b100, 0b100, 0b111],
        'M' => [0b101, 0b111, 0b111, 0b101, 0b101],
        'N' => [0b110, 0b101, 0b101, 0b101, 0b101],
        'O' => [0b010, 0b101, 0b101, 0b101, 0b010],
        'P' => [0b110, 0b101, 0b110, 0b100, 0b100],
        'Q' => [0b010, 0b101, 0b101, 0b110, 0b011],
        'R' => [0b110, 0b101, 0b110, 0b101, 0b101],
        'S' => [0b011, 0b100, 0b010, 0b001, 0b110],
        'T' => [0b111, 0b010, 0b010, 0b010, 0b010],
        'U' => [0b101, 0b101, 0b101, 0b101, 0b111],
        'V' => [0b101, 0b101, 0b101, 0b101, 0b010],
        'W' => [0b101, 0b101, 0b111, 0b111, 0b101],
        'X' => [0b101, 0b101, 0b010, 0b101, 0b101],
        'Y' => [0b101, 0b101, 0b010, 0b010, 0b010],
        'Z' => [0b111, 0b001, 0b010, 0b100, 0b111],
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b110, 0b001, 0b010, 0b100, 0b111],
        '3' => [0b110, 0b001, 0b010, 0b001, 0b110],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b110, 0b001, 0b110],
        '6' => [0b011, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b110],
        '-' | '_' => [0b000, 0b000, 0b111, 0b000, 0b000],
        _ => [0; 5],
    }
}

/// FNV-1a, only used to pick a stable background color per category.
fn color_for(name: &str) -> [u8; 3] {
    let mut h: u32 = 0x811c_9dc5;
    for b in name.bytes() {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    // Keep channels in the mid range so black text stays readable.
    let ch = |shift: u32| 96 + ((h >> shift) & 0x7f) as u8;
    [ch(0), ch(8), ch(16)]
}

/// Renders one labeled tile as PNG bytes. `variant` shifts the shade a little per asset.
pub fn render_tile(label: &str, variant: u32) -> Vec<u8> {
    let size = TILE_SIZE;
    let mut base = color_for(label);
    let shade = ((variant * 17) % 48) as u8;
    for c in &mut base {
        *c = c.saturating_add(shade);
    }
    let mut rgb = vec![0u8; (size * size * 3) as usize];
    for px in rgb.chunks_exact_mut(3) {
        px.copy_from_slice(&base);
    }

    let text: Vec<char> = label.chars().take(size as usize / (4 * SCALE) as usize).collect();
    let text_w = text.len() as u32 * 4 * SCALE;
    let x0 = size.saturating_sub(text_w) / 2;
    let y0 = (size - 5 * SCALE) / 2;
    for (i, ch) in text.iter().enumerate() {
        let rows = glyph(*ch);
        for (ry, row) in rows.iter().enumerate() {
            for rx in 0..3u32 {
                if row & (0b100 >> rx) == 0 {
                    continue;
                }
                for dy in 0..SCALE {
                    for dx in 0..SCALE {
                        let x = x0 + i as u32 * 4 * SCALE + rx * SCALE + dx;
                        let y = y0 + ry as u32 * SCALE + dy;
                        let off = ((y * size + x) * 3) as usize;
                        rgb[off..off + 3].copy_from_slice(&[16, 16, 16]);
                    }
                }
            }
        }
    }

    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, size, size);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.add_text_chunk("category".into(), label.into())
            .expect("static text chunk");
        let mut writer = enc.write_header().expect("in-memory png header");
        writer.write_image_data(&rgb).expect("in-memory png body");
    }
    out
}

/// Writes `per_category` tiles for each category plus a `manifest.json` into `dir`.
pub fn write_placeholder_catalog(dir: &Path, categories: &[&str], per_category: usize) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut cats = Vec::new();
    for name in categories {
        let sub = dir.join(name);
        fs::create_dir_all(&sub)?;
        let mut assets = Vec::new();
        for i in 0..per_category {
            let file = format!("{name}/{name}-{i:02}.png");
            fs::write(dir.join(&file), render_tile(name, i as u32))?;
            assets.push(json!({ "id": format!("{name}-{i:02}"), "path": file, "illusion": false }));
        }
        cats.push(json!({ "name": name, "assets": assets }));
    }
    let manifest = dir.join("manifest.json");
    let doc = serde_json::to_string_pretty(&json!({ "categories": cats }))?;
    fs::write(&manifest, doc + "\n")?;
    Ok(manifest)
}
