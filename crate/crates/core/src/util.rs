//! Shared plumbing: the worker pool and key=value config files.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use rayon::ThreadPool;

/// Environment variable capping internal parallelism.
/// `0` (or `1`) selects strict single-threaded mode.
pub const THREADS_ENV: &str = "DIXON_THREADS";

static POOL: OnceLock<ThreadPool> = OnceLock::new();

/// Worker pool shared by all compute kernels.
///
/// Sized from `DIXON_THREADS` on first use; unset means one worker per
/// available core. All kernels write disjoint output slabs with fixed
/// reduction orders, so results are bitwise identical for any pool size.
pub fn pool() -> &'static ThreadPool {
    POOL.get_or_init(|| {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .map(|n| n.max(1))
            .unwrap_or_else(|| {
                std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
            });
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("failed to build worker pool")
    })
}

/// Parse a `key=value` config file into an ordered map.
///
/// Blank lines and lines starting with `#` are ignored. Values keep
/// internal whitespace; keys and values are trimmed.
pub fn parse_kv_file(path: &Path) -> std::io::Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_kv_str(&text))
}

/// Parse `key=value` lines from a string.
pub fn parse_kv_str(text: &str) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    map
}

/// Render an ordered map back to `key=value` lines.
pub fn render_kv(map: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in map {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// Format a count with thousands separators, e.g. `10803` -> `"10,803"`.
pub fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    let offset = digits.len() % 3;
    for (i, c) in digits.chars().enumerate() {
        if i != 0 && (i + 3 - offset) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}
