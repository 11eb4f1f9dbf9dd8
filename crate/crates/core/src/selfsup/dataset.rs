use std::collections::HashSet;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use rand::seq::index::sample;
use sha2::{Digest, Sha256};

use super::episode::{replay, Episode};
use super::record::{read_records, write_records, EpisodeRecord};
use crate::error::{Error, Result};
use crate::geometry::{io as cloud_io, PointCloud};
use crate::keypoints::ToolKeypoints;
use crate::rng;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const CLOUDS_FILE: &str = "clouds.keto";
pub const MANIFEST_FILE: &str = "manifest.txt";
/// Separates the hash lines of a manifest from the echoed configuration.
pub const CONFIG_MARKER: &str = "--- config";

/// Records plus the clouds they point into.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<EpisodeRecord>,
    pub clouds: Vec<PointCloud>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Dataset {
    /// Appends an episode, pointing its record at the stored cloud.
    pub fn push(&mut self, ep: Episode) {
        let mut record = ep.record;
        record.cloud = self.clouds.len();
        self.clouds.push(ep.cloud);
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn successes(&self) -> usize {
        self.records.iter().filter(|r| r.success).count()
    }

    pub fn cloud(&self, r: &EpisodeRecord) -> Result<&PointCloud> {
        self.clouds
            .get(r.cloud)
            .ok_or_else(|| Error::Format(format!("episode {} refers to missing cloud {}", r.episode_id, r.cloud)))
    }

    /// Training triples for every record that got as far as keypoints.
    pub fn samples(&self) -> Result<Vec<(&PointCloud, ToolKeypoints, bool)>> {
        self.records
            .iter()
            .filter_map(|r| r.tool_keypoints().map(|k| (r, k)))
            .map(|(r, k)| Ok((self.cloud(r)?, k, r.success)))
            .collect()
    }

    /// First successful (cloud, keypoints) per tool, in record order.
    pub fn template_entries(&self) -> Result<Vec<(PointCloud, ToolKeypoints)>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for r in self.records.iter().filter(|r| r.success) {
            if let Some(k) = r.tool_keypoints() {
                if seen.insert(r.tool_id.as_str()) {
                    out.push((self.cloud(r)?.clone(), k));
                }
            }
        }
        Ok(out)
    }

    /// Replays `n` records drawn without replacement and returns the ids
    /// whose success bit did not reproduce.
    pub fn audit(&self, n: usize, seed: u64) -> Result<Vec<u64>> {
        let picks = sample(&mut rng::rng(seed), self.len(), n.min(self.len()));
        let mut bad = Vec::new();
        for i in picks.into_vec() {
            let r = &self.records[i];
            if replay(r, self.cloud(r)?)? != r.success {
                bad.push(r.episode_id);
            }
        }
        bad.sort_unstable();
        Ok(bad)
    }

    fn encode(&self) -> Result<(Vec<u8>, Vec<u8>)> {
        let mut records = Vec::new();
        write_records(&mut records, &self.records)?;
        let mut clouds = Vec::new();
        cloud_io::write_clouds(&mut clouds, &self.clouds)?;
        Ok((records, clouds))
    }

    /// Writes the records, the cloud sidecar and a manifest holding their
    /// hashes followed by `config`.
    pub fn save(&self, dir: &Path, config: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let (records, clouds) = self.encode()?;
        fs::write(dir.join(RECORDS_FILE), &records)?;
        fs::write(dir.join(CLOUDS_FILE), &clouds)?;
        let manifest = format!(
            "{RECORDS_FILE} {}\n{CLOUDS_FILE} {}\nrecords {}\n{CONFIG_MARKER}\n{config}",
            sha256_hex(&records),
            sha256_hex(&clouds),
            self.len()
        );
        fs::write(dir.join(MANIFEST_FILE), manifest)?;
        Ok(())
    }

    /// Loads a saved dataset, checking the manifest hashes and every cloud
    /// reference.
    pub fn load(dir: &Path) -> Result<Dataset> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read(&p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingArtifact(p.display().to_string()),
                _ => Error::Io(e),
            })
        };
        let manifest = String::from_utf8(read(MANIFEST_FILE)?).map_err(|e| Error::Parse(e.to_string()))?;
        let records = read(RECORDS_FILE)?;
        let clouds = read(CLOUDS_FILE)?;
        for (name, bytes) in [(RECORDS_FILE, &records), (CLOUDS_FILE, &clouds)] {
            let want = manifest
                .lines()
                .find_map(|l| l.strip_prefix(name).map(str::trim))
                .ok_or_else(|| Error::Parse(format!("manifest lacks {name}")))?;
            if want != sha256_hex(bytes) {
                return Err(Error::Format(format!("{name} does not match its manifest hash")));
            }
        }
        let data = Dataset {
            records: read_records(BufReader::new(&records[..]))?,
            clouds: cloud_io::read_clouds(&clouds[..])?,
        };
        for r in &data.records {
            data.cloud(r)?;
        }
        Ok(data)
    }
}

/// The configuration text echoed into a manifest.
pub fn manifest_config(manifest: &str) -> Option<&str> {
    manifest.split_once(&format!("{CONFIG_MARKER}\n")).map(|(_, c)| c)
}
