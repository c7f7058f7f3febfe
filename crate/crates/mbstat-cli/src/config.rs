//! Config-file overlay and metadata sidecars.
//!
//! A config file is `key = value` lines (blank lines and `#` comments
//! allowed). Keys use the underscore form of the corresponding long flag.
//! The whole key list is validated on load so a typo aborts instead of
//! silently falling through to a default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mbstat::{Error, Result};

/// Every key any subcommand honors; one shared list so a single config file
/// can serve a whole pipeline run.
const KNOWN_KEYS: &[&str] = &[
    // synth
    "companies",
    "steps",
    "seed",
    "price_start",
    "price_drift",
    "price_vol",
    "volume_mean",
    "volume_sigma",
    "risk_orders",
    "risk_axes",
    // moments
    "window",
    "n_max",
    "xi",
    "stride",
    "scaling",
    "allow_zero_volume",
    // aggregate
    "cell_size",
    "k_x",
    "k_m",
    "markowitz_tol",
    // density
    "n",
    "b",
    "two_k",
    "span_sigmas",
    "points",
    "quad_points",
    "negativity_budget",
];

/// File-supplied defaults, consulted wherever a flag was omitted.
pub struct Overlay {
    values: BTreeMap<String, String>,
}

impl Overlay {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut values = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (li, raw) in text.lines().enumerate() {
                let line_no = (li + 1) as u64;
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(Error::parse(path, line_no, "expected key = value"));
                };
                let k = k.trim();
                if !KNOWN_KEYS.contains(&k) {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("unknown config key {k:?}"),
                    ));
                }
                values.insert(k.to_string(), v.trim().to_string());
            }
        }
        Ok(Self { values })
    }

    /// Flag value if present, else the file value, else the default.
    pub fn resolve<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered config key {key}");
        match flag {
            Some(v) => Ok(v),
            None => match self.values.get(key) {
                Some(raw) => raw.parse().map_err(|_| {
                    Error::InvalidConfig(format!("{key}: cannot parse {raw:?}"))
                }),
                None => Ok(default),
            },
        }
    }

    /// Like [`Overlay::resolve`] for settings with no default.
    pub fn resolve_opt<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered config key {key}");
        match flag {
            Some(v) => Ok(Some(v)),
            None => match self.values.get(key) {
                Some(raw) => raw
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {raw:?}"))),
                None => Ok(None),
            },
        }
    }
}

/// Sidecar path: the output path with `.meta.json` appended.
#[must_use]
pub fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the sidecar next to `out`.
pub fn write_meta(out: &Path, meta: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(meta).expect("meta is valid json") + "\n";
    mbstat::trade_data::write_atomic(&meta_path(out), text.as_bytes())
}
