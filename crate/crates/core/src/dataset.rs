//! Dataset manifests: ordered reference and query lists plus the
//! ground-truth convention used to score matches.
//!
//! ```toml
//! reference_dir = "winter"        # or reference_list = "refs.txt"
//! query_list = "summer.txt"       # or query_dir = ...
//!
//! [ground_truth]
//! mode = "frame-offset"
//! frame_tolerance = 10
//! ```
//!
//! Metric mode instead names a coordinates CSV (`list,index,x_m,y_m`, with
//! `list` one of `reference`/`query`) and `metric_tolerance_m`. Feature-only
//! datasets, such as the synthetic benchmark, give `reference_count` and
//! `query_count` in place of image lists.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

/// The images of one list, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageList {
    Files(Vec<PathBuf>),
    /// A list known only by size; image-based methods cannot bind to it.
    Virtual(usize),
}

impl ImageList {
    pub fn len(&self) -> usize {
        match self {
            ImageList::Files(f) => f.len(),
            ImageList::Virtual(n) => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn files(&self) -> Option<&[PathBuf]> {
        match self {
            ImageList::Files(f) => Some(f),
            ImageList::Virtual(_) => None,
        }
    }
}

/// One of the two image lists of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ListKind {
    Reference,
    Query,
}

impl std::str::FromStr for ListKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" | "references" | "ref" => Ok(ListKind::Reference),
            "query" | "queries" => Ok(ListKind::Query),
            other => Err(Error::Usage(format!(
                "unknown list `{other}`, expected `reference` or `query`"
            ))),
        }
    }
}

impl std::fmt::Display for ListKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ListKind::Reference => "reference",
            ListKind::Query => "query",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruthSpec {
    /// Query `q` matches reference `r` when `|q - r| <= tolerance`.
    FrameOffset { tolerance: usize },
    /// Planar coordinates in meters, one per image of each list.
    Metric {
        tolerance_m: f64,
        reference_coords: Vec<(f64, f64)>,
        query_coords: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub references: ImageList,
    pub queries: ImageList,
    pub ground_truth: GroundTruthSpec,
}

impl Dataset {
    pub fn num_references(&self) -> usize {
        self.references.len()
    }

    pub fn num_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn list(&self, which: ListKind) -> &ImageList {
        match which {
            ListKind::Reference => &self.references,
            ListKind::Query => &self.queries,
        }
    }
}

/// On-disk manifest schema.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_list: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_list: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_count: Option<usize>,
    pub ground_truth: ManifestGroundTruth,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestGroundTruth {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_tolerance: Option<usize>,
    /// Required in frame-offset mode when the lists differ in length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_aligned: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_tolerance_m: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct CoordRow {
    list: String,
    index: usize,
    x_m: f64,
    y_m: f64,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        if is_image && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn read_list_file(path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| resolve(base, Path::new(l)))
        .collect())
}

fn image_list(
    which: &str,
    dir: &Option<PathBuf>,
    list: &Option<PathBuf>,
    count: Option<usize>,
    base: &Path,
) -> Result<ImageList> {
    let given = dir.is_some() as u8 + list.is_some() as u8 + count.is_some() as u8;
    if given != 1 {
        return Err(Error::invalid(
            "manifest",
            format!("exactly one of {which}_dir, {which}_list, {which}_count is required"),
        ));
    }
    let list = if let Some(dir) = dir {
        ImageList::Files(list_dir(&resolve(base, dir))?)
    } else if let Some(list) = list {
        let files = read_list_file(&resolve(base, list))?;
        if let Some(missing) = files.iter().find(|f| !f.is_file()) {
            return Err(Error::io(
                missing,
                std::io::Error::new(std::io::ErrorKind::NotFound, "image file not found"),
            ));
        }
        ImageList::Files(files)
    } else {
        ImageList::Virtual(count.unwrap_or(0))
    };
    if list.is_empty() {
        return Err(Error::Usage(format!("{which} list is empty")));
    }
    Ok(list)
}

type Coords = Vec<(f64, f64)>;

fn read_coords(path: &Path, n_refs: usize, n_queries: usize) -> Result<(Coords, Coords)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let mut refs = vec![None; n_refs];
    let mut queries = vec![None; n_queries];
    for row in reader.deserialize::<CoordRow>() {
        let row = row.map_err(|e| Error::parse(path, e))?;
        if !(row.x_m.is_finite() && row.y_m.is_finite()) {
            return Err(Error::parse(path, format!("non-finite coordinate for {} {}", row.list, row.index)));
        }
        let slot = match row.list.as_str() {
            "reference" | "ref" => refs.get_mut(row.index),
            "query" => queries.get_mut(row.index),
            other => return Err(Error::parse(path, format!("unknown list `{other}`"))),
        };
        let slot = slot.ok_or_else(|| {
            Error::parse(path, format!("{} index {} out of range", row.list, row.index))
        })?;
        *slot = Some((row.x_m, row.y_m));
    }
    let finish = |v: Vec<Option<(f64, f64)>>, which: &str| {
        v.iter()
            .enumerate()
            .map(|(i, c)| {
                c.ok_or_else(|| {
                    Error::invalid("manifest", format!("no coordinates for {which} {i}"))
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    Ok((finish(refs, "reference")?, finish(queries, "query")?))
}

impl Manifest {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse(origin, e))
    }

    /// Resolves lists against `base` and validates the ground truth block.
    pub fn into_dataset(self, base: &Path) -> Result<Dataset> {
        let references = image_list(
            "reference",
            &self.reference_dir,
            &self.reference_list,
            self.reference_count,
            base,
        )?;
        let queries = image_list("query", &self.query_dir, &self.query_list, self.query_count, base)?;
        let gt = &self.ground_truth;
        let ground_truth = match gt.mode.as_str() {
            "frame-offset" => {
                let tolerance = gt.frame_tolerance.ok_or_else(|| {
                    Error::invalid("manifest", "frame-offset mode needs ground_truth.frame_tolerance")
                })?;
                if references.len() != queries.len() && gt.index_aligned != Some(true) {
                    return Err(Error::invalid(
                        "manifest",
                        format!(
                            "frame-offset mode with {} references and {} queries requires ground_truth.index_aligned = true",
                            references.len(),
                            queries.len()
                        ),
                    ));
                }
                GroundTruthSpec::FrameOffset { tolerance }
            }
            "metric" => {
                let csv = gt.coords_csv.as_ref().ok_or_else(|| {
                    Error::invalid("manifest", "metric mode needs ground_truth.coords_csv")
                })?;
                let tolerance_m = gt.metric_tolerance_m.ok_or_else(|| {
                    Error::invalid("manifest", "metric mode needs ground_truth.metric_tolerance_m")
                })?;
                if !(tolerance_m.is_finite() && tolerance_m > 0.0) {
                    return Err(Error::invalid(
                        "manifest",
                        format!("metric tolerance {tolerance_m} must be positive"),
                    ));
                }
                let (reference_coords, query_coords) =
                    read_coords(&resolve(base, csv), references.len(), queries.len())?;
                GroundTruthSpec::Metric {
                    tolerance_m,
                    reference_coords,
                    query_coords,
                }
            }
            other => {
                return Err(Error::invalid(
                    "manifest",
                    format!("unknown ground truth mode `{other}`"),
                ))
            }
        };
        Ok(Dataset {
            references,
            queries,
            ground_truth,
        })
    }
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let path = manifest_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = Manifest::from_toml_str(&text, path)?;
    manifest.into_dataset(path.parent().unwrap_or_else(|| Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ErrorCategory;

    fn write(dir: &Path, name: &str, contents: &[u8]) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, contents).unwrap();
        p
    }

    #[test]
    fn frame_offset_manifest_with_counts() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "m.toml",
            b"reference_count = 1000\nquery_count = 1000\n[ground_truth]\nmode = \"frame-offset\"\nframe_tolerance = 10\n",
        );
        let ds = load_dataset(&m).unwrap();
        assert_eq!(ds.num_references(), 1000);
        assert_eq!(ds.ground_truth, GroundTruthSpec::FrameOffset { tolerance: 10 });
    }

    #[test]
    fn unequal_lists_need_alignment_assertion() {
        let dir = tempfile::tempdir().unwrap();
        let base = "reference_count = 10\nquery_count = 8\n[ground_truth]\nmode = \"frame-offset\"\nframe_tolerance = 2\n";
        let m = write(dir.path(), "m.toml", base.as_bytes());
        assert_eq!(load_dataset(&m).unwrap_err().category(), ErrorCategory::Validation);
        let m = write(dir.path(), "m2.toml", format!("{base}index_aligned = true\n").as_bytes());
        assert!(load_dataset(&m).is_ok());
    }

    #[test]
    fn metric_manifest_reads_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "coords.csv",
            b"list,index,x_m,y_m\nreference,0,0,0\nreference,1,100,0\nquery,0,30,0\n",
        );
        let m = write(
            dir.path(),
            "m.toml",
            b"reference_count = 2\nquery_count = 1\n[ground_truth]\nmode = \"metric\"\ncoords_csv = \"coords.csv\"\nmetric_tolerance_m = 50\n",
        );
        let ds = load_dataset(&m).unwrap();
        match ds.ground_truth {
            GroundTruthSpec::Metric {
                tolerance_m,
                reference_coords,
                query_coords,
            } => {
                assert_eq!(tolerance_m, 50.0);
                assert_eq!(reference_coords[1], (100.0, 0.0));
                assert_eq!(query_coords, vec![(30.0, 0.0)]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn metric_mode_without_all_coordinates_fails() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "coords.csv", b"list,index,x_m,y_m\nreference,0,0,0\n");
        let m = write(
            dir.path(),
            "m.toml",
            b"reference_count = 2\nquery_count = 1\n[ground_truth]\nmode = \"metric\"\ncoords_csv = \"coords.csv\"\nmetric_tolerance_m = 50\n",
        );
        assert!(load_dataset(&m).is_err());
        let m = write(
            dir.path(),
            "m2.toml",
            b"reference_count = 2\nquery_count = 1\n[ground_truth]\nmode = \"metric\"\nmetric_tolerance_m = 50\n",
        );
        assert!(load_dataset(&m).is_err());
    }

    #[test]
    fn missing_image_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.png", b"");
        write(dir.path(), "refs.txt", b"a.png\nmissing.png\n");
        let m = write(
            dir.path(),
            "m.toml",
            b"reference_list = \"refs.txt\"\nquery_list = \"refs.txt\"\n[ground_truth]\nmode = \"frame-offset\"\nframe_tolerance = 0\n",
        );
        let err = load_dataset(&m).unwrap_err();
        assert_eq!(err.category(), ErrorCategory::Io);
        assert!(err.to_string().contains("missing.png"), "{err}");
    }

    #[test]
    fn directory_listing_is_sorted_and_filtered() {
        let dir = tempfile::tempdir().unwrap();
        let imgs = dir.path().join("imgs");
        fs::create_dir(&imgs).unwrap();
        for name in ["b.png", "a.jpg", "notes.txt", "c.JPEG"] {
            write(&imgs, name, b"");
        }
        let m = write(
            dir.path(),
            "m.toml",
            b"reference_dir = \"imgs\"\nquery_dir = \"imgs\"\n[ground_truth]\nmode = \"frame-offset\"\nframe_tolerance = 1\n",
        );
        let ds = load_dataset(&m).unwrap();
        let names: Vec<_> = ds.references.files().unwrap().iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
        assert_eq!(names, vec!["a.jpg", "b.png", "c.JPEG"]);
    }

    #[test]
    fn bad_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(dir.path(), "m.toml", b"reference_count = 2\nquery_count = 2\n[ground_truth]\nmode = \"gps\"\n");
        assert!(load_dataset(&m).unwrap_err().to_string().contains("gps"));
        let m = write(dir.path(), "m2.toml", b"reference_count = 2\n[ground_truth]\nmode = \"frame-offset\"\nframe_tolerance = 1\n");
        assert!(load_dataset(&m).is_err());
        let m = write(dir.path(), "m3.toml", b"reference_count = 0\nquery_count = 2\n[ground_truth]\nmode = \"frame-offset\"\nframe_tolerance = 1\n");
        assert_eq!(load_dataset(&m).unwrap_err().category(), ErrorCategory::Usage);
        let m = write(dir.path(), "m4.toml", b"this is not toml =");
        assert_eq!(load_dataset(&m).unwrap_err().category(), ErrorCategory::Parse);
    }
}
