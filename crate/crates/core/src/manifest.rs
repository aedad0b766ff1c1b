//! Dataset manifests: one JSON file per dataset naming its items, class
//! table, cue set and the provenance of the operation that generated it.
//!
//! Derived datasets always get a fresh manifest; provenance holds the exact
//! command line so a run can be reconstructed verbatim.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CueError, Result};
use crate::io;
use crate::raster::{
    validate_mask, ClassEntry, ClassTable, CueSet, LabelMask, RasterImage, IGNORE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub image: PathBuf,
    pub mask: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestFile {
    name: String,
    split: Split,
    classes: Vec<ClassEntry>,
    cue_set: CueSet,
    items: Vec<ManifestItem>,
    provenance: String,
    rng_seed: u64,
}

/// A validated dataset manifest. Item paths are stored as written in the
/// file and resolved against the manifest's directory on access.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub name: String,
    pub split: Split,
    pub class_table: ClassTable,
    pub cue_set: CueSet,
    pub items: Vec<ManifestItem>,
    pub provenance: String,
    pub rng_seed: u64,
    base_dir: PathBuf,
}

impl DatasetManifest {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: String,
        split: Split,
        class_table: ClassTable,
        cue_set: CueSet,
        items: Vec<ManifestItem>,
        provenance: String,
        rng_seed: u64,
        base_dir: PathBuf,
    ) -> Result<Self> {
        cue_set.validate()?;
        if provenance.trim().is_empty() {
            return Err(CueError::Schema(
                "provenance must be non-empty for derived datasets".into(),
            ));
        }
        Ok(Self {
            name,
            split,
            class_table,
            cue_set,
            items,
            provenance,
            rng_seed,
            base_dir,
        })
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn k(&self) -> usize {
        self.class_table.k()
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn image_path(&self, index: usize) -> PathBuf {
        self.resolve(&self.items[index].image)
    }

    pub fn mask_path(&self, index: usize) -> PathBuf {
        self.resolve(&self.items[index].mask)
    }

    /// Load and validate one item: image and mask must exist, share
    /// dimensions, and the mask must only contain ids below K (or IGNORE).
    pub fn load_item(&self, index: usize) -> Result<(RasterImage, LabelMask)> {
        let img = io::load_image(&self.image_path(index))?;
        let mask = io::load_mask(&self.mask_path(index))?;
        if !mask.matches_image(&img) {
            return Err(CueError::DimensionMismatch(format!(
                "item {index}: image {}x{} vs mask {}x{}",
                img.width(),
                img.height(),
                mask.width(),
                mask.height()
            )));
        }
        let report = validate_mask(&mask, &self.class_table);
        if !report.is_valid() {
            let v = &report.violations[0];
            return Err(CueError::Schema(format!(
                "item {index}: mask contains label {} ({} px) outside 0..{} (ignore is {})",
                v.label,
                v.count,
                self.k(),
                IGNORE
            )));
        }
        Ok((img, mask))
    }
}

/// Parse a manifest and eagerly validate its first item; the rest are
/// validated lazily via [`DatasetManifest::load_item`].
pub fn load_dataset(path: &Path) -> Result<DatasetManifest> {
    if !path.exists() {
        return Err(CueError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CueError::io(path, e))?;
    let file: ManifestFile = serde_json::from_str(&text)?;
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest = DatasetManifest::new(
        file.name,
        file.split,
        ClassTable::new(file.classes)?,
        file.cue_set,
        file.items,
        file.provenance,
        file.rng_seed,
        base_dir,
    )?;
    if !manifest.items.is_empty() {
        manifest.load_item(0)?;
    }
    Ok(manifest)
}

/// Serialize a manifest next to its data. Paths are written as stored.
pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let file = ManifestFile {
        name: manifest.name.clone(),
        split: manifest.split,
        classes: manifest.class_table.entries().to_vec(),
        cue_set: manifest.cue_set,
        items: manifest.items.clone(),
        provenance: manifest.provenance.clone(),
        rng_seed: manifest.rng_seed,
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json + "\n").map_err(|e| CueError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ColorSpace;

    fn write_item(dir: &Path, stem: &str, w: usize, h: usize, mask_w: usize) -> ManifestItem {
        let img = RasterImage::filled(ColorSpace::Rgb, h, w, 0.5);
        let mask = LabelMask::filled(h, mask_w, 0);
        io::save_image(&img, &dir.join(format!("{stem}.png"))).unwrap();
        io::save_mask(&mask, &dir.join(format!("{stem}_mask.png"))).unwrap();
        ManifestItem {
            image: PathBuf::from(format!("{stem}.png")),
            mask: PathBuf::from(format!("{stem}_mask.png")),
        }
    }

    fn manifest_with(dir: &Path, items: Vec<ManifestItem>) -> DatasetManifest {
        DatasetManifest::new(
            "toy".into(),
            Split::Train,
            ClassTable::synthetic(3),
            CueSet::ALL,
            items,
            "unit test".into(),
            7,
            dir.to_path_buf(),
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_reproduces_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let items: Vec<_> = (0..3)
            .map(|i| write_item(dir.path(), &format!("it{i}"), 6, 4, 6))
            .collect();
        let manifest = manifest_with(dir.path(), items);
        let path = dir.path().join("manifest.json");
        save_manifest(&manifest, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.name, manifest.name);
        assert_eq!(back.split, manifest.split);
        assert_eq!(back.items, manifest.items);
        assert_eq!(back.class_table, manifest.class_table);
        assert_eq!(back.cue_set, manifest.cue_set);
        assert_eq!(back.provenance, manifest.provenance);
        assert_eq!(back.rng_seed, manifest.rng_seed);
        assert_eq!(back.items.len(), 3);
    }

    #[test]
    fn dimension_mismatch_is_caught_eagerly_on_first_item() {
        let dir = tempfile::tempdir().unwrap();
        let items = vec![write_item(dir.path(), "bad", 8, 4, 6)];
        let manifest = manifest_with(dir.path(), items);
        let path = dir.path().join("manifest.json");
        save_manifest(&manifest, &path).unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(matches!(err, CueError::DimensionMismatch(_)));
    }

    #[test]
    fn out_of_range_class_id_fails_on_access() {
        let dir = tempfile::tempdir().unwrap();
        let good = write_item(dir.path(), "a", 4, 4, 4);
        let img = RasterImage::filled(ColorSpace::Rgb, 4, 4, 0.5);
        let mask = LabelMask::filled(4, 4, 3); // table has K = 3, ids 0..2
        io::save_image(&img, &dir.path().join("b.png")).unwrap();
        io::save_mask(&mask, &dir.path().join("b_mask.png")).unwrap();
        let bad = ManifestItem {
            image: "b.png".into(),
            mask: "b_mask.png".into(),
        };
        let manifest = manifest_with(dir.path(), vec![good, bad]);
        let path = dir.path().join("manifest.json");
        save_manifest(&manifest, &path).unwrap();
        // First item is fine, so loading succeeds.
        let loaded = load_dataset(&path).unwrap();
        // The schema violation surfaces on access to the second item.
        let err = loaded.load_item(1).unwrap_err();
        assert!(matches!(err, CueError::Schema(_)));
    }

    #[test]
    fn missing_manifest_maps_to_missing_file() {
        let err = load_dataset(Path::new("/no/such/manifest.json")).unwrap_err();
        assert!(matches!(err, CueError::MissingFile(_)));
    }
}
