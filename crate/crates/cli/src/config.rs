//! `run-all` configuration: TOML file values overridden by flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use srlflow::mining::DetailSettings;
use srlflow::{Error, Result};

use crate::pipeline::Basis;

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DetailFile {
    pub activity_detail: Option<f64>,
    pub path_detail: Option<f64>,
}

/// Every field optional; relative paths resolve against the file's directory.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub input: Option<PathBuf>,
    pub profile: Option<PathBuf>,
    pub segments: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub annotator_a: Option<PathBuf>,
    pub annotator_b: Option<PathBuf>,
    pub learners: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub min_meaningful: Option<usize>,
    pub count_basis: Option<Basis>,
    pub sd_convention: Option<String>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub level: Option<f64>,
    #[serde(default)]
    pub micro: DetailFile,
    #[serde(default, rename = "macro")]
    pub macro_: DetailFile,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: ConfigFile = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.input,
            &mut cfg.profile,
            &mut cfg.segments,
            &mut cfg.labels,
            &mut cfg.schema,
            &mut cfg.annotator_a,
            &mut cfg.annotator_b,
            &mut cfg.learners,
            &mut cfg.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

pub const DEFAULT_MIN_MEANINGFUL: usize = 10;
pub const DEFAULT_SD: &str = "population";
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_REPLICATES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Fully resolved settings for one pipeline run.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub profile: Option<PathBuf>,
    pub segments: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub annotators: Option<(PathBuf, PathBuf)>,
    pub learners: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub min_meaningful: usize,
    pub count_basis: Basis,
    pub sd_convention: String,
    pub seed: u64,
    pub replicates: usize,
    pub level: f64,
    pub micro: DetailSettings,
    pub macro_: DetailSettings,
}

fn detail(file: DetailFile, flag_ad: Option<f64>, flag_pd: Option<f64>) -> Result<DetailSettings> {
    DetailSettings::new(
        flag_ad.or(file.activity_detail).unwrap_or(1.0),
        flag_pd.or(file.path_detail).unwrap_or(1.0),
    )
}

impl PipelineConfig {
    /// Merges `flags` over `file` over defaults and checks that inputs exist.
    pub fn resolve(file: ConfigFile, flags: &crate::RunAllArgs) -> Result<Self> {
        let pick = |flag: &Option<PathBuf>, file: Option<PathBuf>| flag.clone().or(file);
        let input = pick(&flags.input, file.input)
            .ok_or_else(|| Error::InvalidParameter("no input log given (--input or config `input`)".into()))?;
        let a = pick(&flags.annotator_a, file.annotator_a);
        let b = pick(&flags.annotator_b, file.annotator_b);
        let annotators = match (a, b) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => {
                return Err(Error::InvalidParameter(
                    "annotator files must be given as a pair".into(),
                ))
            }
        };
        let cfg = PipelineConfig {
            input,
            profile: pick(&flags.profile, file.profile),
            segments: pick(&flags.segments, file.segments),
            labels: pick(&flags.labels, file.labels),
            schema: pick(&flags.schema, file.schema),
            annotators,
            learners: pick(&flags.learners, file.learners),
            output_dir: pick(&flags.out_dir, file.output_dir).unwrap_or_else(|| PathBuf::from("srlflow-out")),
            min_meaningful: flags
                .min_meaningful
                .or(file.min_meaningful)
                .unwrap_or(DEFAULT_MIN_MEANINGFUL),
            count_basis: flags.count_basis.or(file.count_basis).unwrap_or(Basis::Events),
            sd_convention: flags
                .sd
                .clone()
                .or(file.sd_convention)
                .unwrap_or_else(|| DEFAULT_SD.to_string()),
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            replicates: flags.replicates.or(file.replicates).unwrap_or(DEFAULT_REPLICATES),
            level: flags.level.or(file.level).unwrap_or(DEFAULT_LEVEL),
            micro: detail(file.micro, flags.micro_activity_detail, flags.micro_path_detail)?,
            macro_: detail(file.macro_, flags.macro_activity_detail, flags.macro_path_detail)?,
        };
        cfg.check_paths()?;
        Ok(cfg)
    }

    fn check_paths(&self) -> Result<()> {
        let mut paths: Vec<&Path> = vec![&self.input];
        paths.extend(
            [&self.profile, &self.segments, &self.labels, &self.schema, &self.learners]
                .into_iter()
                .flatten()
                .map(PathBuf::as_path),
        );
        if let Some((a, b)) = &self.annotators {
            paths.extend([a.as_path(), b.as_path()]);
        }
        for p in paths {
            if !p.is_file() {
                return Err(Error::Io {
                    path: p.to_path_buf(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RunAllArgs;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "raw.json", "{}");
        let cfg = write(dir.path(), "p.toml", "input = \"raw.json\"\noutput_dir = \"out\"\n");
        let file = ConfigFile::load(&cfg).unwrap();
        assert_eq!(file.input.as_deref(), Some(dir.path().join("raw.json").as_path()));
        assert_eq!(file.output_dir.as_deref(), Some(dir.path().join("out").as_path()));
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "raw.json", "{}");
        let cfg = write(
            dir.path(),
            "p.toml",
            "input = \"raw.json\"\nseed = 7\nreplicates = 50\n[macro]\npath_detail = 0.2\n",
        );
        let flags = RunAllArgs {
            seed: Some(9),
            macro_activity_detail: Some(0.5),
            ..Default::default()
        };
        let r = PipelineConfig::resolve(ConfigFile::load(&cfg).unwrap(), &flags).unwrap();
        assert_eq!(r.seed, 9);
        assert_eq!(r.replicates, 50);
        assert_eq!(r.level, DEFAULT_LEVEL);
        assert_eq!(r.sd_convention, DEFAULT_SD);
        assert_eq!(r.macro_, DetailSettings::new(0.5, 0.2).unwrap());
        assert_eq!(r.micro, DetailSettings::default());
    }

    #[test]
    fn rejects_unknown_keys_half_pairs_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let bad = write(dir.path(), "bad.toml", "inptu = \"x\"\n");
        assert!(ConfigFile::load(&bad).is_err());
        let raw = write(dir.path(), "raw.json", "{}");
        let half = ConfigFile {
            input: Some(raw.clone()),
            annotator_a: Some(raw.clone()),
            ..Default::default()
        };
        assert!(PipelineConfig::resolve(half, &RunAllArgs::default()).is_err());
        let missing = ConfigFile {
            input: Some(dir.path().join("nope.json")),
            ..Default::default()
        };
        assert!(PipelineConfig::resolve(missing, &RunAllArgs::default()).is_err());
    }
}
