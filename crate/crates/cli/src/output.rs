use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::{CliError, CliResult};

/// 17 significant digits, so equal strings mean equal bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Stable within one build; hashes the bit patterns of `c`.
pub fn context_hash(c: &[f64]) -> String {
    let mut h = DefaultHasher::new();
    for v in c {
        v.to_bits().hash(&mut h);
    }
    format!("{:016x}", h.finish())
}

/// Where an experiment may write. Every path is resolved under `root`.
#[derive(Clone, Debug)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root)?;
        let probe = root.join(".write_probe");
        std::fs::write(&probe, b"")
            .map_err(|e| CliError::Config(format!("out_dir: {} is not writable ({e})", root.display())))?;
        std::fs::remove_file(&probe)?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<PathBuf> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(paracflow::Error::from)?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// Runs `jobs` on up to `workers` threads and returns results in job order.
/// Each job carries its own seed, so the output does not depend on `workers`.
pub fn run_jobs<J, T, F>(jobs: Vec<J>, workers: usize, f: F) -> Vec<T>
where
    J: Send,
    T: Send,
    F: Fn(J) -> T + Sync,
{
    let n = jobs.len();
    let queue = Mutex::new(jobs.into_iter().enumerate().collect::<Vec<_>>().into_iter());
    let results: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let next = queue.lock().expect("job queue").next();
                let Some((i, job)) = next else { break };
                let out = f(job);
                results.lock().expect("results")[i] = Some(out);
            });
        }
    });
    results.into_inner().expect("results").into_iter().map(|r| r.expect("job ran")).collect()
}
