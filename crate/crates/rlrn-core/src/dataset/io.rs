//! Dataset persistence: one JSON record per line with rasters as base64 of
//! raw row-major channel-last bytes, plus a sidecar manifest carrying record
//! counts, the config hash and a whole-file checksum.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BevRaster, SceneSample, TrajectoryHistory, VehicleState};
use crate::error::{Error, Result};
use crate::sim::Action;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: usize,
    pub config_hash: String,
    pub n_normal: u32,
    pub n_ghost: u32,
    pub seed_path: String,
    pub sha256: String,
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    n_normal: u32,
    n_ghost: u32,
    raster_size: u32,
    raster_extent: f32,
    histories: Vec<Vec<[f32; 5]>>,
    route: Vec<[f32; 2]>,
    action: [f32; 3],
    labels: Vec<u8>,
    rasters: Vec<String>,
}

impl RecordJson {
    fn from_sample(sample: &SceneSample) -> Self {
        let (size, extent) = sample
            .rasters
            .first()
            .map(|r| (r.size as u32, r.extent))
            .unwrap_or((0, 0.0));
        Self {
            n_normal: sample.n_normal,
            n_ghost: sample.n_ghost,
            raster_size: size,
            raster_extent: extent,
            histories: sample
                .histories
                .iter()
                .map(|h| h.states().iter().map(|s| s.to_array()).collect())
                .collect(),
            route: sample.route.clone(),
            action: [sample.expert.st, sample.expert.ac, sample.expert.br],
            labels: sample.labels.clone(),
            rasters: sample.rasters.iter().map(|r| BASE64.encode(&r.data)).collect(),
        }
    }

    fn into_sample(self) -> Result<SceneSample> {
        let size = self.raster_size as usize;
        let rasters = self
            .rasters
            .iter()
            .map(|b64| {
                let data = BASE64
                    .decode(b64)
                    .map_err(|e| Error::CorruptDataset(format!("raster base64: {e}")))?;
                if data.len() != size * size * 3 {
                    return Err(Error::CorruptDataset(format!(
                        "raster byte length {} != {}",
                        data.len(),
                        size * size * 3
                    )));
                }
                Ok(BevRaster { size, extent: self.raster_extent, data })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SceneSample {
            histories: self
                .histories
                .into_iter()
                .map(|h| TrajectoryHistory(h.into_iter().map(VehicleState::from_array).collect()))
                .collect(),
            rasters,
            route: self.route,
            expert: Action { st: self.action[0], ac: self.action[1], br: self.action[2] },
            labels: self.labels,
            n_normal: self.n_normal,
            n_ghost: self.n_ghost,
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn manifest_path(data_path: &Path) -> PathBuf {
    let mut name = data_path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    data_path.with_file_name(name)
}

/// Write samples as JSON lines plus a manifest. Files land via
/// write-then-rename so interrupted runs leave nothing partial behind.
pub fn write_dataset(
    path: &Path,
    samples: &[SceneSample],
    config_hash: &str,
    n_normal: u32,
    n_ghost: u32,
    seed_path: &str,
) -> Result<DatasetManifest> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    let mut hasher = Sha256::new();
    {
        let mut out = BufWriter::new(File::create(&tmp)?);
        for sample in samples {
            let line = serde_json::to_string(&RecordJson::from_sample(sample))?;
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
            out.write_all(line.as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
    }
    fs::rename(&tmp, path)?;
    let manifest = DatasetManifest {
        records: samples.len(),
        config_hash: config_hash.to_string(),
        n_normal,
        n_ghost,
        seed_path: seed_path.to_string(),
        sha256: hex(&hasher.finalize()),
    };
    let mpath = manifest_path(path);
    let mtmp = mpath.with_extension("tmp");
    fs::write(&mtmp, serde_json::to_string_pretty(&manifest)?)?;
    fs::rename(&mtmp, &mpath)?;
    Ok(manifest)
}

/// Streaming dataset reader. The file checksum is verified up front with a
/// streaming hash; records parse lazily, one line at a time.
pub struct DatasetReader {
    lines: std::io::Lines<BufReader<File>>,
    pub manifest: DatasetManifest,
    line_no: usize,
}

pub fn read_dataset(path: &Path) -> Result<DatasetReader> {
    let mpath = manifest_path(path);
    let manifest: DatasetManifest = serde_json::from_str(
        &fs::read_to_string(&mpath)
            .map_err(|e| Error::Staging(format!("missing manifest {}: {e}", mpath.display())))?,
    )?;
    let mut hasher = Sha256::new();
    let mut file = File::open(path)?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hex(&hasher.finalize());
    if digest != manifest.sha256 {
        return Err(Error::CorruptDataset(format!(
            "{}: checksum mismatch (file {digest}, manifest {})",
            path.display(),
            manifest.sha256
        )));
    }
    let lines = BufReader::new(File::open(path)?).lines();
    Ok(DatasetReader { lines, manifest, line_no: 0 })
}

impl Iterator for DatasetReader {
    type Item = Result<SceneSample>;

    fn next(&mut self) -> Option<Self::Item> {
        let line = match self.lines.next()? {
            Ok(l) => l,
            Err(e) => return Some(Err(e.into())),
        };
        self.line_no += 1;
        let record: RecordJson = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                return Some(Err(Error::CorruptDataset(format!(
                    "line {}: {e}",
                    self.line_no
                ))))
            }
        };
        Some(record.into_sample())
    }
}

/// Convenience: read an entire dataset into memory.
pub fn read_all(path: &Path) -> Result<Vec<SceneSample>> {
    read_dataset(path)?.collect()
}
