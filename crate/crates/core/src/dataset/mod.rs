//! Train/test catalogs: on-disk loading, synthetic generation and the
//! learning/testing splits used by active learning.
//!
//! On-disk layout:
//!
//! ```text
//! root/
//!   train/<class_name>/*.png|jpg   training images, one directory per class
//!   test/...                       test images (any layout)
//!   manifest.csv                   relative_path,class_name for test images
//! ```

mod split;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imagecore::GrayImage;

pub use split::{split_for_learning, split_indices, SplitSpec};
pub use synth::{
    class_names, generate_synthetic, generate_synthetic_with, render_product, render_shelf,
    synthetic_styles,
    ClassStyle, SynthOptions, PRODUCT_HEIGHT, PRODUCT_WIDTH,
};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const TRAIN_DIR: &str = "train";
pub const MANIFEST_HEADER: [&str; 2] = ["relative_path", "class_name"];
/// Test images are downscaled on load to at most this height.
pub const MAX_TEST_HEIGHT: usize = 1080;

/// Path of an image relative to the catalog root, with `/` separators.
pub type ImageRef = String;

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TestImage {
    pub image: ImageRef,
    pub class: usize,
}

#[derive(Clone)]
enum ImageStore {
    Disk(PathBuf),
    Memory(Arc<BTreeMap<ImageRef, image::GrayImage>>),
    Synthetic(Arc<synth::Renderer>),
}

/// Immutable description of a dataset. Class order is lexicographic so that
/// feature bins stay stable across runs.
#[derive(Clone)]
pub struct Catalog {
    classes: Vec<String>,
    train: Vec<Vec<ImageRef>>,
    test: Vec<TestImage>,
    store: ImageStore,
}

impl PartialEq for Catalog {
    fn eq(&self, other: &Self) -> bool {
        self.classes == other.classes && self.train == other.train && self.test == other.test
    }
}

impl std::fmt::Debug for Catalog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Catalog")
            .field("classes", &self.classes)
            .field("train", &self.train.iter().map(Vec::len).collect::<Vec<_>>())
            .field("test", &self.test.len())
            .finish()
    }
}

impl Catalog {
    /// Builds a catalog over in-memory images. Classes are reordered
    /// lexicographically; labels are remapped accordingly.
    pub fn from_memory(
        classes: Vec<String>,
        train: Vec<Vec<(ImageRef, GrayImage)>>,
        test: Vec<(ImageRef, GrayImage, usize)>,
    ) -> Result<Self> {
        if classes.len() != train.len() {
            return Err(Error::param("train", "one image list per class required"));
        }
        let mut order: Vec<usize> = (0..classes.len()).collect();
        order.sort_by(|&a, &b| classes[a].cmp(&classes[b]));
        let mut remap = vec![0; classes.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        check_unique(&classes)?;

        let mut images = BTreeMap::new();
        let mut train_refs = vec![Vec::new(); classes.len()];
        for (old, list) in train.into_iter().enumerate() {
            for (r, img) in list {
                train_refs[remap[old]].push(r.clone());
                images.insert(r, img.to_luma8());
            }
        }
        let mut test_entries = Vec::new();
        for (r, img, class) in test {
            if class >= classes.len() {
                return Err(Error::LabelOutOfRange {
                    label: class,
                    classes: classes.len(),
                });
            }
            test_entries.push(TestImage {
                image: r.clone(),
                class: remap[class],
            });
            images.insert(r, img.to_luma8());
        }
        let classes = order.iter().map(|&i| classes[i].clone()).collect();
        Ok(Self {
            classes,
            train: train_refs,
            test: test_entries,
            store: ImageStore::Memory(Arc::new(images)),
        })
    }

    pub(crate) fn from_renderer(
        classes: Vec<String>,
        train: Vec<Vec<ImageRef>>,
        test: Vec<TestImage>,
        renderer: synth::Renderer,
    ) -> Self {
        Self {
            classes,
            train,
            test,
            store: ImageStore::Synthetic(Arc::new(renderer)),
        }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn train_images(&self, class: usize) -> &[ImageRef] {
        &self.train[class]
    }

    pub fn num_train_images(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn test_images(&self) -> &[TestImage] {
        &self.test
    }

    /// Decodes an image at its stored resolution.
    pub fn load_image(&self, image: &str) -> Result<GrayImage> {
        match &self.store {
            ImageStore::Disk(root) => {
                let path = root.join(image);
                let img = image::open(&path).map_err(|source| Error::Image {
                    path: path.clone(),
                    source,
                })?;
                Ok(GrayImage::from_dynamic(&img))
            }
            ImageStore::Memory(map) => map
                .get(image)
                .map(GrayImage::from_luma8)
                .ok_or_else(|| Error::param("image", format!("unknown image `{image}`"))),
            ImageStore::Synthetic(r) => r.render(image),
        }
    }

    pub fn train_image(&self, class: usize, index: usize) -> Result<GrayImage> {
        self.load_image(&self.train[class][index])
    }

    /// Test image `index`, limited to [`MAX_TEST_HEIGHT`].
    pub fn test_image(&self, index: usize) -> Result<GrayImage> {
        Ok(self
            .load_image(&self.test[index].image)?
            .limit_height(MAX_TEST_HEIGHT))
    }

    /// Writes the catalog in the on-disk layout. Disk-backed images are copied
    /// byte for byte; generated and in-memory images are encoded as PNG.
    pub fn write(&self, root: &Path) -> Result<()> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let refs = self
            .train
            .iter()
            .flatten()
            .chain(self.test.iter().map(|t| &t.image));
        for r in refs {
            let dest = root.join(r);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            match &self.store {
                ImageStore::Disk(src) => {
                    fs::copy(src.join(r), &dest).map_err(|e| Error::io(&dest, e))?;
                }
                _ => {
                    let img = self.load_image(r)?.to_luma8();
                    img.save_with_format(&dest, image::ImageFormat::Png)
                        .map_err(|source| Error::Image {
                            path: dest.clone(),
                            source,
                        })?;
                }
            }
        }
        // Empty classes still need their directory.
        for class in &self.classes {
            let dir = root.join(TRAIN_DIR).join(class);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let manifest = root.join(MANIFEST_FILE);
        let mut w = csv::Writer::from_path(&manifest)?;
        w.write_record(MANIFEST_HEADER)?;
        for t in &self.test {
            w.write_record([t.image.as_str(), self.classes[t.class].as_str()])?;
        }
        w.flush().map_err(|e| Error::io(&manifest, e))?;
        Ok(())
    }

    /// SHA-256 over class names, image lists, labels and decoded pixels.
    pub fn fingerprint(&self) -> Result<String> {
        let mut h = Sha256::new();
        for c in &self.classes {
            h.update(c.as_bytes());
            h.update([0]);
        }
        for (class, list) in self.train.iter().enumerate() {
            for r in list {
                h.update((class as u64).to_le_bytes());
                h.update(r.as_bytes());
                h.update(self.load_image(r)?.to_luma8().as_raw());
            }
        }
        for t in &self.test {
            h.update((t.class as u64).to_le_bytes());
            h.update(t.image.as_bytes());
            h.update(self.load_image(&t.image)?.to_luma8().as_raw());
        }
        Ok(hex::encode(h.finalize()))
    }
}

/// Decodes an uploaded query image the way test images are loaded.
pub fn decode_query_image(bytes: &[u8]) -> Result<GrayImage> {
    let img = image::load_from_memory(bytes).map_err(|source| Error::Image {
        path: PathBuf::from("<upload>"),
        source,
    })?;
    Ok(GrayImage::from_dynamic(&img).limit_height(MAX_TEST_HEIGHT))
}

/// Reads and decodes a query image file.
pub fn load_query_image(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_query_image(&bytes).map_err(|e| match e {
        Error::Image { source, .. } => Error::Image {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

fn check_unique(classes: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for c in classes {
        if !seen.insert(c) {
            return Err(Error::param("classes", format!("duplicate class `{c}`")));
        }
    }
    Ok(())
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

fn relative_ref(root: &Path, path: &Path) -> ImageRef {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn check_decodable(root: &Path, r: &str) -> Result<()> {
    let path = root.join(r);
    image::ImageReader::open(&path)
        .map_err(|e| Error::io(&path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(&path, e))?
        .into_dimensions()
        .map_err(|source| Error::Image { path, source })?;
    Ok(())
}

/// Loads a catalog from the on-disk layout, validating that every image
/// decodes and every manifest class has a training directory.
pub fn load_catalog(root: &Path) -> Result<Catalog> {
    let manifest = root.join(MANIFEST_FILE);
    if !manifest.is_file() {
        return Err(Error::MissingManifest(manifest));
    }
    let train_root = root.join(TRAIN_DIR);
    let mut classes = Vec::new();
    if train_root.is_dir() {
        for entry in fs::read_dir(&train_root).map_err(|e| Error::io(&train_root, e))? {
            let entry = entry.map_err(|e| Error::io(&train_root, e))?;
            if entry.path().is_dir() {
                classes.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
    }
    classes.sort();

    let mut train = Vec::with_capacity(classes.len());
    for class in &classes {
        let dir = train_root.join(class);
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image_file(p))
            .collect();
        files.sort();
        let refs: Vec<ImageRef> = files.iter().map(|p| relative_ref(root, p)).collect();
        for r in &refs {
            check_decodable(root, r)?;
        }
        train.push(refs);
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(&manifest)?;
    let mut test = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(Error::Manifest {
                path: manifest.clone(),
                line: line + 1,
                reason: format!("expected 2 fields, found {}", record.len()),
            });
        }
        if line == 0 && record.iter().eq(MANIFEST_HEADER) {
            continue;
        }
        let (path, class) = (record[0].trim(), record[1].trim());
        let class = classes
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| Error::UnknownClass(class.to_string()))?;
        check_decodable(root, path)?;
        test.push(TestImage {
            image: path.to_string(),
            class,
        });
    }

    Ok(Catalog {
        classes,
        train,
        test,
        store: ImageStore::Disk(root.to_path_buf()),
    })
}
