use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imagery::{load_gray, load_mask, split_into_windows, BinaryMask, GrayImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    /// Manifest file holding this split.
    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.tsv",
            Split::Validation => "val.tsv",
            Split::Test => "test.tsv",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub image: PathBuf,
    pub gt: PathBuf,
    pub split: Split,
}

/// Image / ground-truth pairs grouped by split.
///
/// On disk a manifest is a directory with up to three files, `train.tsv`,
/// `val.tsv` and `test.tsv`, each holding one `image_path<TAB>gt_path` record
/// per line. Relative paths resolve against the directory.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<Record>,
}

impl DatasetManifest {
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut records = Vec::new();
        let mut found = false;
        for split in Split::ALL {
            let path = dir.join(split.file_name());
            if path.exists() {
                found = true;
                records.extend(read_split_file(&path, split)?);
            }
        }
        if !found {
            return Err(Error::Manifest {
                path: dir.to_path_buf(),
                line: 0,
                message: "no train.tsv, val.tsv or test.tsv".into(),
            });
        }
        Ok(DatasetManifest { records })
    }

    /// Writes the split files into `dir`, with paths relative to `dir` where
    /// possible.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for split in Split::ALL {
            let lines: String = self
                .split(split)
                .map(|r| {
                    let rel = |p: &Path| p.strip_prefix(dir).unwrap_or(p).display().to_string();
                    format!("{}\t{}\n", rel(&r.image), rel(&r.gt))
                })
                .collect();
            if lines.is_empty() {
                continue;
            }
            let path = dir.join(split.file_name());
            fs::write(&path, lines).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn load_pages(&self, split: Split) -> Result<Vec<Page>> {
        self.split(split).map(Page::load).collect()
    }
}

fn read_split_file(path: &Path, split: Split) -> Result<Vec<Record>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(image), Some(gt), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected image_path<TAB>gt_path".into(),
            });
        };
        out.push(Record {
            image: base.join(image),
            gt: base.join(gt),
            split,
        });
    }
    Ok(out)
}

/// A page and its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Page {
    pub name: String,
    pub image: GrayImage,
    pub gt: BinaryMask,
}

impl Page {
    pub fn new(name: impl Into<String>, image: GrayImage, gt: BinaryMask) -> Result<Self> {
        image.ensure_same_dims(&gt)?;
        Ok(Page {
            name: name.into(),
            image,
            gt,
        })
    }

    pub fn load(record: &Record) -> Result<Self> {
        let name = record
            .image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Page::new(name, load_gray(&record.image)?, load_mask(&record.gt)?)
    }
}

/// A window and its ground truth, pixel for pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub image: GrayImage,
    pub gt: BinaryMask,
}

/// Disjoint grid windows of each page, reflect-padded at the edges.
pub fn patches_from_pages(pages: &[Page], window_side: usize) -> Result<Vec<Patch>> {
    let mut out = Vec::new();
    for page in pages {
        page.image.ensure_same_dims(&page.gt)?;
        let (_, images) = split_into_windows(&page.image, window_side)?;
        let (_, gts) = split_into_windows(&page.gt, window_side)?;
        out.extend(images.into_iter().zip(gts).map(|(image, gt)| Patch { image, gt }));
    }
    Ok(out)
}

/// Grid patches of one split of a manifest.
pub fn extract_patches(manifest: &DatasetManifest, split: Split, window_side: usize) -> Result<Vec<Patch>> {
    patches_from_pages(&manifest.load_pages(split)?, window_side)
}
