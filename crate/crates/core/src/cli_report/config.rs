//! Line-oriented `key = value` run configuration.

use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::constants::C_AU;
use crate::error::{Error, Result};
use crate::pairsolver::{Exchange, Gauge};

/// Recognised keys in canonical (manifest) order.
pub const KEYS: [&str; 15] = [
    "Z",
    "states",
    "grid.n",
    "grid.rmin",
    "grid.rmax",
    "c",
    "l_max",
    "kgrid.n",
    "kgrid.k0",
    "gauge",
    "nvp",
    "contributions",
    "basis.n",
    "basis.lmax",
    "out",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Contribution {
    OnePhoton,
    OnePhotonCorrelated,
    CoulombLadder,
}

impl Contribution {
    pub fn name(self) -> &'static str {
        match self {
            Contribution::OnePhoton => "one-photon",
            Contribution::OnePhotonCorrelated => "one-photon-correlated",
            Contribution::CoulombLadder => "coulomb-ladder",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Contribution::OnePhoton, Contribution::OnePhotonCorrelated, Contribution::CoulombLadder]
            .into_iter()
            .find(|c| c.name() == s)
    }

    pub fn needs_photon(self) -> bool {
        self != Contribution::CoulombLadder
    }
}

/// Two-electron `ns n's` state in LS notation, e.g. `1s2s 3S` or `1s2 1S`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSpec {
    pub label: String,
    /// Principal quantum numbers, `n1 ≤ n2`.
    pub n1: u32,
    pub n2: u32,
    pub big_j: u32,
    pub exchange: Exchange,
}

impl StateSpec {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut parts = text.split_whitespace();
        let (config, term) = match (parts.next(), parts.next(), parts.next()) {
            (Some(c), Some(t), None) => (c, t),
            _ => return Err(format!("state `{text}` is not `<configuration> <term>`")),
        };
        let spin = match term {
            "1S" | "¹S" => 0,
            "3S" | "³S" => 1,
            _ => return Err(format!("term `{term}` is not 1S or 3S")),
        };
        let (n1, n2) = parse_configuration(config).ok_or_else(|| format!("configuration `{config}` is not ns n's or ns2"))?;
        if n1 == n2 && spin == 1 {
            return Err(format!("{config} has no 3S term"));
        }
        Ok(StateSpec {
            label: format!("{config} {}", if spin == 0 { "1S" } else { "3S" }),
            n1,
            n2,
            big_j: spin,
            exchange: Exchange::Antisymmetric,
        })
    }
}

fn parse_configuration(s: &str) -> Option<(u32, u32)> {
    let (a, rest) = s.split_once('s')?;
    let n1: u32 = a.parse().ok()?;
    let n2 = if rest == "2" || rest == "^2" {
        n1
    } else {
        rest.strip_suffix('s')?.parse().ok()?
    };
    (n1 >= 1 && n2 >= 1).then_some((n1.min(n2), n1.max(n2)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub z: f64,
    pub states: Vec<StateSpec>,
    pub grid_n: usize,
    pub grid_rmin: f64,
    pub grid_rmax: f64,
    pub c: f64,
    /// Highest photon multipole.
    pub l_max: u32,
    pub kgrid_n: usize,
    pub kgrid_k0: f64,
    pub gauge: Gauge,
    pub nvp: bool,
    pub contributions: Vec<Contribution>,
    /// Orbitals per κ in the pair basis.
    pub basis_n: usize,
    /// Highest orbital angular momentum in the pair basis.
    pub basis_lmax: u32,
    pub out: PathBuf,
    /// Keys filled from defaults, in canonical order.
    pub defaulted: Vec<&'static str>,
}

impl RunConfig {
    /// Resolved value of `key` as echoed in the manifest.
    pub fn value(&self, key: &str) -> String {
        match key {
            "Z" => self.z.to_string(),
            "states" => self.states.iter().map(|s| s.label.as_str()).collect::<Vec<_>>().join(", "),
            "grid.n" => self.grid_n.to_string(),
            "grid.rmin" => self.grid_rmin.to_string(),
            "grid.rmax" => self.grid_rmax.to_string(),
            "c" => self.c.to_string(),
            "l_max" => self.l_max.to_string(),
            "kgrid.n" => self.kgrid_n.to_string(),
            "kgrid.k0" => self.kgrid_k0.to_string(),
            "gauge" => self.gauge.name().to_string(),
            "nvp" => self.nvp.to_string(),
            "contributions" => self.contributions.iter().map(|c| c.name()).collect::<Vec<_>>().join(", "),
            "basis.n" => self.basis_n.to_string(),
            "basis.lmax" => self.basis_lmax.to_string(),
            "out" => self.out.display().to_string(),
            _ => panic!("unknown key {key}"),
        }
    }

    /// Canonical text of everything that affects results (`out` excluded).
    pub fn canonical(&self) -> String {
        KEYS.iter().filter(|&&k| k != "out").map(|k| format!("{k} = {}\n", self.value(k))).collect()
    }

    /// Hex SHA-256 prefix of [`RunConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn wants(&self, c: Contribution) -> bool {
        self.contributions.contains(&c)
    }

    /// κ values of the pair basis, `l ≤ basis.lmax`.
    pub fn kappas(&self) -> Vec<i32> {
        let mut ks = vec![-1];
        for l in 1..=self.basis_lmax as i32 {
            ks.extend([l, -l - 1]);
        }
        ks
    }
}

fn err(line: usize, key: &str, msg: impl Into<String>) -> Error {
    Error::Config { line, key: key.to_string(), msg: msg.into() }
}

fn number<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| err(line, key, format!("cannot parse `{v}`")))
}

/// Parses and validates a configuration, filling defaults for absent keys.
/// `Z` is required. Line numbers are 1-based; 0 marks an absent key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut given: Vec<(&'static str, usize, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| err(line, body, "expected `key = value`"))?;
        let key = key.trim();
        let known = KEYS.iter().find(|&&k| k == key).ok_or_else(|| err(line, key, "unknown key"))?;
        if given.iter().any(|(k, _, _)| k == known) {
            return Err(err(line, key, "duplicate key"));
        }
        given.push((known, line, value.trim().to_string()));
    }
    let get = |key: &str| given.iter().find(|(k, _, _)| *k == key).map(|(_, l, v)| (*l, v.as_str()));
    let line_of = |key: &str| get(key).map_or(0, |(l, _)| l);
    let mut defaulted = Vec::new();

    let (zl, zv) = get("Z").ok_or_else(|| err(0, "Z", "missing required key"))?;
    let z: f64 = number(zl, "Z", zv)?;

    macro_rules! field {
        ($key:literal, $default:expr, $parse:expr) => {
            match get($key) {
                Some((line, v)) => $parse(line, v)?,
                None => {
                    defaulted.push($key);
                    $default
                }
            }
        };
    }

    let states = field!("states", vec![StateSpec::parse("1s2s 1S").unwrap(), StateSpec::parse("1s2s 3S").unwrap()], |line, v: &str| {
        v.split(',').map(|s| StateSpec::parse(s.trim()).map_err(|m| err(line, "states", m))).collect::<Result<Vec<_>>>()
    });
    let grid_n: usize = field!("grid.n", 120, |l, v| number(l, "grid.n", v));
    let grid_rmin: f64 = field!("grid.rmin", 1e-6, |l, v| number(l, "grid.rmin", v));
    let grid_rmax: f64 = field!("grid.rmax", 60.0 / z, |l, v| number(l, "grid.rmax", v));
    let c: f64 = field!("c", C_AU, |l, v| number(l, "c", v));
    let l_max: u32 = field!("l_max", 6, |l, v| number(l, "l_max", v));
    let kgrid_n: usize = field!("kgrid.n", 120, |l, v| number(l, "kgrid.n", v));
    let kgrid_k0: f64 = field!("kgrid.k0", 10.0, |l, v| number(l, "kgrid.k0", v));
    let gauge = field!("gauge", Gauge::Coulomb, |l, v: &str| match v {
        "coulomb" => Ok(Gauge::Coulomb),
        "feynman" => Ok(Gauge::Feynman),
        _ => Err(err(l, "gauge", format!("`{v}` is not coulomb or feynman"))),
    });
    let nvp = field!("nvp", true, |l, v: &str| match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(l, "nvp", format!("`{v}` is not true or false"))),
    });
    let contributions = field!("contributions", vec![Contribution::OnePhoton], |l, v: &str| {
        let mut out = Vec::new();
        for s in v.split(',').map(str::trim) {
            let c = Contribution::parse(s).ok_or_else(|| err(l, "contributions", format!("unknown contribution `{s}`")))?;
            if out.contains(&c) {
                return Err(err(l, "contributions", format!("`{s}` listed twice")));
            }
            out.push(c);
        }
        Ok(out)
    });
    let basis_n: usize = field!("basis.n", 12, |l, v| number(l, "basis.n", v));
    let basis_lmax: u32 = field!("basis.lmax", 2, |l, v| number(l, "basis.lmax", v));
    let out = field!("out", PathBuf::from("qedmbpt.csv"), |_, v: &str| Ok::<_, Error>(PathBuf::from(v)));

    let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(err(line_of(key), key, msg)) };
    check(z.is_finite() && z > 0.0, "Z", "must be positive")?;
    check(c.is_finite() && c >= 1.0, "c", "must be at least 1")?;
    check(z < c, "Z", "Z/c must be below 1")?;
    check(!states.is_empty(), "states", "no states listed")?;
    check((20..=4000).contains(&grid_n), "grid.n", "must lie in 20..=4000")?;
    check(grid_rmin.is_finite() && grid_rmin > 0.0, "grid.rmin", "must be positive")?;
    check(grid_rmax.is_finite() && grid_rmax > grid_rmin, "grid.rmax", "must exceed grid.rmin")?;
    check(l_max <= 30, "l_max", "must not exceed 30")?;
    check((20..=2000).contains(&kgrid_n), "kgrid.n", "must lie in 20..=2000")?;
    check(kgrid_k0.is_finite() && kgrid_k0 > 0.0, "kgrid.k0", "must be positive")?;
    check(nvp, "nvp", "negative-energy intermediate states are not supported")?;
    check(!contributions.is_empty(), "contributions", "no contributions listed")?;
    check(
        gauge == Gauge::Coulomb || !contributions.contains(&Contribution::OnePhotonCorrelated),
        "gauge",
        "one-photon-correlated runs in the Coulomb gauge only",
    )?;
    check((1..=60).contains(&basis_n), "basis.n", "must lie in 1..=60")?;
    check(basis_lmax <= 4, "basis.lmax", "must not exceed 4")?;
    let n_top = states.iter().map(|s| s.n2).max().unwrap_or(1) as usize;
    check(basis_n >= n_top, "basis.n", "too small for the requested states")?;

    Ok(RunConfig {
        z,
        states,
        grid_n,
        grid_rmin,
        grid_rmax,
        c,
        l_max,
        kgrid_n,
        kgrid_k0,
        gauge,
        nvp,
        contributions,
        basis_n,
        basis_lmax,
        out,
        defaulted,
    })
}
