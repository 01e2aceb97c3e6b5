//! Patch directory handling: the `index.csv` sidecar that maps patch
//! files to (image_id, grid_index, label), and loaders that reconstruct
//! patches either from the index or from the filename contract
//! `<image_id>_p<grid_index>.<ext>`.

use std::fs;
use std::path::{Path, PathBuf};

use histopatch::aggregate::ClassLabel;
use histopatch::error::{Error, Result};
use histopatch::patching::{parse_patch_stem, Patch};
use histopatch::raster::RasterImage;

pub const INDEX_FILE: &str = "index.csv";
pub const INDEX_HEADER: &str = "file,image_id,grid_index,label";

#[derive(Clone, Debug)]
pub struct IndexRow {
    pub file: String,
    pub image_id: String,
    pub grid_index: u32,
    pub label: Option<ClassLabel>,
}

pub fn write_index(dir: &Path, rows: &[IndexRow]) -> Result<()> {
    let mut out = String::from(INDEX_HEADER);
    out.push('\n');
    for r in rows {
        let label = r.label.map(|l| l.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.file, r.image_id, r.grid_index, label
        ));
    }
    let path = dir.join(INDEX_FILE);
    fs::write(&path, out).map_err(|e| Error::io(format!("writing '{}'", path.display()), e))
}

pub fn read_index(dir: &Path) -> Result<Vec<IndexRow>> {
    let path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::io(format!("reading '{}'", path.display()), e))?;
    let name = path.display().to_string();
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || (lineno == 1 && line == INDEX_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                &name,
                lineno,
                format!("expected 4 fields, got {}", fields.len()),
            ));
        }
        let grid_index: u32 = fields[2].parse().map_err(|_| {
            Error::parse(&name, lineno, format!("bad grid index '{}'", fields[2]))
        })?;
        let label = if fields[3].trim().is_empty() {
            None
        } else {
            Some(fields[3].trim().parse().map_err(|_| {
                Error::parse(&name, lineno, format!("bad label '{}'", fields[3]))
            })?)
        };
        rows.push(IndexRow {
            file: fields[0].to_string(),
            image_id: fields[1].to_string(),
            grid_index,
            label,
        });
    }
    Ok(rows)
}

/// One patch file loaded into memory, with both its index identity and
/// its unique file stem (used as the seeding identity by `train`).
pub struct LoadedPatch {
    pub file_stem: String,
    pub image_id: String,
    pub grid_index: u32,
    pub label: Option<ClassLabel>,
    pub pixels: RasterImage,
}

impl LoadedPatch {
    /// Patch keyed by the original image id (prediction contract).
    pub fn as_patch(&self) -> Patch {
        Patch::new(self.image_id.clone(), self.grid_index, self.pixels.clone())
    }

    /// Patch keyed by the file stem, which is unique per file; used where
    /// every item needs its own augmentation stream.
    pub fn as_stem_patch(&self) -> Patch {
        Patch::new(self.file_stem.clone(), self.grid_index, self.pixels.clone())
    }
}

pub fn read_image_file(path: &Path) -> Result<RasterImage> {
    let bytes =
        fs::read(path).map_err(|e| Error::io(format!("reading '{}'", path.display()), e))?;
    RasterImage::decode(&bytes).map_err(|e| match e {
        Error::MalformedFile { offset, reason } => Error::MalformedFile {
            offset,
            reason: format!("{}: {reason}", path.display()),
        },
        Error::UnsupportedFormat { reason } => Error::UnsupportedFormat {
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

fn stem_of(file: &str) -> &str {
    file.rsplit_once('.').map(|(s, _)| s).unwrap_or(file)
}

/// Load a patch directory. With an `index.csv` present the index defines
/// the items (in index order); otherwise the directory is scanned for
/// `.ppm`/`.png` files in sorted order and identities are parsed from the
/// `<image_id>_p<grid_index>` filename contract. Files whose stems do not
/// parse are skipped with a warning.
pub fn load_patch_dir(dir: &Path) -> Result<Vec<LoadedPatch>> {
    if dir.join(INDEX_FILE).exists() {
        let rows = read_index(dir)?;
        let mut out = Vec::with_capacity(rows.len());
        for r in rows {
            let pixels = read_image_file(&dir.join(&r.file))?;
            out.push(LoadedPatch {
                file_stem: stem_of(&r.file).to_string(),
                image_id: r.image_id,
                grid_index: r.grid_index,
                label: r.label,
                pixels,
            });
        }
        return Ok(out);
    }

    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(format!("listing '{}'", dir.display()), e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("ppm") | Some("png")
            )
        })
        .collect();
    files.sort();

    let mut out = Vec::new();
    for path in files {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        match parse_patch_stem(&stem) {
            Some((image_id, grid_index)) => {
                let pixels = read_image_file(&path)?;
                out.push(LoadedPatch {
                    file_stem: stem,
                    image_id,
                    grid_index,
                    label: None,
                    pixels,
                });
            }
            None => {
                log::warn!(
                    "skipping '{}': name does not match <image_id>_p<index>",
                    path.display()
                );
            }
        }
    }
    Ok(out)
}
