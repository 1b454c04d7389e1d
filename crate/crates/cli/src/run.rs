//! Per-invocation bookkeeping: every file read or written is digested and
//! listed in the run manifest.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    pub args: serde_json::Value,
    /// SHA-256 of the canonical JSON of `args`.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    /// Files written; `-` stands for standard output.
    pub artifacts: Vec<FileDigest>,
    pub duration_ms: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Run {
    command: String,
    args: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<FileDigest>,
    artifacts: Vec<FileDigest>,
    manifest: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    started: Instant,
}

impl Run {
    pub fn new<A: Serialize>(command: &str, args: &A, manifest: Option<PathBuf>) -> Self {
        Run {
            command: command.to_string(),
            args: serde_json::to_value(args).expect("arguments serialize"),
            seed: None,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            manifest,
            out_dir: None,
            started: Instant::now(),
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    /// Creates `dir` and makes it the default manifest location.
    pub fn out_dir(&mut self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        self.out_dir = Some(dir.to_path_buf());
        Ok(())
    }

    pub fn read(&mut self, path: &Path) -> Result<String> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(text)
    }

    /// Reads and parses a JSON file, prefixing parse errors with the path.
    pub fn read_with<T, E, F>(&mut self, path: &Path, parse: F) -> Result<T>
    where
        F: FnOnce(&str) -> Result<T, E>,
        E: std::error::Error + Send + Sync + 'static,
    {
        let text = self.read(path)?;
        parse(&text).with_context(|| format!("{}", path.display()))
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&mut self, path: &Path) -> Result<T> {
        self.read_with(path, |t| serde_json::from_str(t))
    }

    pub fn write(&mut self, path: &Path, contents: &str) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    /// Writes into the output directory set by [`Run::out_dir`].
    pub fn write_out(&mut self, name: &str, contents: &str) -> Result<()> {
        let dir = self.out_dir.clone().expect("output directory set");
        self.write(&dir.join(name), contents)
    }

    /// Writes to `path` or, without one, to standard output.
    pub fn emit(&mut self, path: Option<&Path>, contents: &str) -> Result<()> {
        match path {
            Some(p) => self.write(p, contents),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(contents.as_bytes())
                    .context("writing to stdout")?;
                out.flush().context("writing to stdout")?;
                self.artifacts.push(FileDigest {
                    path: "-".into(),
                    sha256: sha256_hex(contents.as_bytes()),
                });
                Ok(())
            }
        }
    }

    /// Streams output produced by `fill` to `path` or standard output.
    pub fn stream<F>(&mut self, path: Option<&Path>, fill: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let (sink, name): (Box<dyn Write>, String) = match path {
            Some(p) => {
                let f = fs::File::create(p).with_context(|| format!("writing {}", p.display()))?;
                (Box::new(f), p.display().to_string())
            }
            None => (Box::new(std::io::stdout().lock()), "-".into()),
        };
        let mut w = HashingWriter {
            inner: std::io::BufWriter::new(sink),
            hasher: Sha256::new(),
        };
        fill(&mut w)
            .and_then(|_| w.flush())
            .with_context(|| format!("writing {name}"))?;
        self.artifacts.push(FileDigest {
            path: name,
            sha256: hex::encode(w.hasher.finalize()),
        });
        Ok(())
    }

    /// Writes the manifest to `--manifest`, else into the output directory,
    /// else to standard error.
    pub fn finish(self) -> Result<()> {
        let canonical = serde_json::to_string(&self.args).expect("arguments serialize");
        let manifest = RunManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            command: self.command,
            config_hash: sha256_hex(canonical.as_bytes()),
            args: self.args,
            seed: self.seed,
            inputs: self.inputs,
            artifacts: self.artifacts,
            duration_ms: self.started.elapsed().as_secs_f64() * 1e3,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        let path = self
            .manifest
            .or_else(|| self.out_dir.map(|d| d.join("manifest.json")));
        match path {
            Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display())),
            None => {
                eprint!("{text}");
                Ok(())
            }
        }
    }
}

struct HashingWriter<W: Write> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

pub fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}
