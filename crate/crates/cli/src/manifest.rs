//! Dataset manifests: one TOML document listing every image with its ground
//! truth, field-of-view mask and optional optic-disc mask. Relative paths are
//! resolved against the manifest's directory.
//!
//! ```toml
//! name = "IOSTAR"
//! resolution = "1024x1024"
//!
//! [[entry]]
//! image = "image/01.png"
//! ground_truth = "GT/01_GT.png"
//! fov_mask = "mask/01_mask.png"
//! od_mask = "mask_OD/01_ODMask.png"
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::io::read_text;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    #[serde(default)]
    name: String,
    #[serde(default)]
    resolution: Option<String>,
    #[serde(default)]
    entry: Vec<RawEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    image: PathBuf,
    ground_truth: PathBuf,
    fov_mask: PathBuf,
    od_mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    /// Image file stem; names every output for this entry.
    pub stem: String,
    pub image: PathBuf,
    pub ground_truth: PathBuf,
    pub fov_mask: PathBuf,
    /// Set where the pixel may be evaluated (outside the optic disc).
    pub od_mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub name: String,
    pub resolution: Option<String>,
    pub entries: Vec<Entry>,
}

impl DatasetManifest {
    pub fn parse(text: &str, base: &Path) -> CliResult<Self> {
        let raw: RawManifest = toml::from_str(text)
            .map_err(|e| CliError::Data(format!("malformed manifest: {e}")))?;
        if raw.entry.is_empty() {
            return Err(CliError::Data("manifest lists no entries".into()));
        }
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let mut seen = HashSet::new();
        let mut entries = Vec::with_capacity(raw.entry.len());
        for e in raw.entry {
            let stem = e
                .image
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| CliError::Data(format!("bad image path {}", e.image.display())))?
                .to_string();
            if !seen.insert(stem.clone()) {
                return Err(CliError::Data(format!("duplicate image name `{stem}` in manifest")));
            }
            entries.push(Entry {
                stem,
                image: resolve(e.image),
                ground_truth: resolve(e.ground_truth),
                fov_mask: resolve(e.fov_mask),
                od_mask: e.od_mask.map(resolve),
            });
        }
        Ok(Self { name: raw.name, resolution: raw.resolution, entries })
    }

    /// Reads the manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_text(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let m = Self::parse(&text, base)?;
        let missing: Vec<String> = m
            .entries
            .iter()
            .flat_map(|e| [Some(&e.image), Some(&e.ground_truth), Some(&e.fov_mask), e.od_mask.as_ref()])
            .flatten()
            .filter(|p| !p.is_file())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(CliError::Data(format!("missing files: {}", missing.join(", "))));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves() {
        let text = r#"
            name = "toy"
            [[entry]]
            image = "img/a.png"
            ground_truth = "gt/a.png"
            fov_mask = "/abs/mask.png"
            [[entry]]
            image = "img/b.pgm"
            ground_truth = "gt/b.png"
            fov_mask = "m.png"
            od_mask = "od.png"
        "#;
        let m = DatasetManifest::parse(text, Path::new("/data")).unwrap();
        assert_eq!(m.name, "toy");
        assert_eq!(m.entries[0].stem, "a");
        assert_eq!(m.entries[0].image, PathBuf::from("/data/img/a.png"));
        assert_eq!(m.entries[0].fov_mask, PathBuf::from("/abs/mask.png"));
        assert_eq!(m.entries[1].od_mask, Some(PathBuf::from("/data/od.png")));
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        let dup = r#"
            [[entry]]
            image = "x/a.png"
            ground_truth = "g"
            fov_mask = "m"
            [[entry]]
            image = "y/a.png"
            ground_truth = "g"
            fov_mask = "m"
        "#;
        assert!(DatasetManifest::parse(dup, Path::new(".")).is_err());
        assert!(DatasetManifest::parse("name = \"x\"", Path::new(".")).is_err());
        assert!(DatasetManifest::parse("[[entry]]\nimage = 3", Path::new(".")).is_err());
    }
}
