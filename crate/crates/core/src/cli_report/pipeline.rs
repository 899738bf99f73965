//! Stage orchestration from a validated [`RunConfig`] to contribution records.

use crate::angular::InteractionKind;
use crate::constants::UH_PER_HARTREE;
use crate::error::{Error, Result};
use crate::pairsolver::kgrid::{MIN_POLE, POLE_CLEARANCE};
use crate::pairsolver::{
    integrate_photon_family, l_tail_estimate, make_kgrid, one_photon_matrix_element, photon_sectors, sector_poles,
    CoulombIntegrals, Gauge, OrbitalBasis, PairOptions, PairSpace, PhotonContext, Reference,
};
use crate::radial::{build_spectrum, make_grid, SpectrumSet};

use super::config::{Contribution, RunConfig, StateSpec, KEYS};

#[derive(Clone, Debug, PartialEq)]
pub struct ContributionRecord {
    pub state: String,
    pub kind: InteractionKind,
    pub dressing: Contribution,
    /// Microhartree.
    pub value_uh: f64,
    /// Estimated multipoles beyond `l_max`, microhartree.
    pub l_tail_uh: f64,
    pub k_nodes: usize,
    pub iterations: usize,
}

/// Everything a run used, each entry once, plus the executed stages.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub config_hash: String,
    /// `(key, value, defaulted)`.
    pub parameters: Vec<(String, String, bool)>,
    pub constants: Vec<(String, String)>,
    pub stages: Vec<&'static str>,
}

impl Manifest {
    pub fn text(&self) -> String {
        let mut s = String::from("# qedmbpt run manifest\n");
        s += &format!("config_hash = {}\n", self.config_hash);
        for (k, v, d) in &self.parameters {
            s += &format!("{k} = {v}{}\n", if *d { "  # default" } else { "" });
        }
        for (k, v) in &self.constants {
            s += &format!("{k} = {v}\n");
        }
        s += &format!("stages = {}\n", self.stages.join(", "));
        s
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<ContributionRecord>,
    pub manifest: Manifest,
}

/// Kinds reported per gauge, in output order.
pub fn gauge_kinds(gauge: Gauge) -> [InteractionKind; 2] {
    match gauge {
        Gauge::Coulomb => [InteractionKind::Gaunt, InteractionKind::ScalarRetardation],
        Gauge::Feynman => [InteractionKind::Gaunt, InteractionKind::Coulomb],
    }
}

struct Stages(Vec<&'static str>);

impl Stages {
    fn run<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        if !self.0.contains(&name) {
            self.0.push(name);
        }
        f().map_err(|e| e.at(name))
    }
}

/// Spectrum over the basis κ set, `(grid, spectrum)` stages only.
pub fn build_run_spectrum(cfg: &RunConfig) -> Result<SpectrumSet> {
    let mut st = Stages(Vec::new());
    spectrum(cfg, &mut st)
}

fn spectrum(cfg: &RunConfig, st: &mut Stages) -> Result<SpectrumSet> {
    let grid = st.run("grid", || make_grid(cfg.grid_n, cfg.grid_rmin, cfg.grid_rmax))?;
    st.run("spectrum", || build_spectrum(cfg.z, &cfg.kappas(), &grid, cfg.c))
}

fn pair_of(basis: &OrbitalBasis, state: &StateSpec) -> Result<(usize, usize)> {
    let find = |n| basis.find(n, -1).ok_or_else(|| Error::InvalidModel(format!("{}: no {n}s orbital in the basis", state.label)));
    Ok((find(state.n1)?, find(state.n2)?))
}

/// Per-kind totals and l-tail estimates from `(kind, l, value)` triples.
fn summarize(kind: InteractionKind, terms: &[(InteractionKind, u32, f64)]) -> (f64, f64) {
    let ls: Vec<f64> = {
        let l_top = terms.iter().map(|t| t.1).max().unwrap_or(0);
        (0..=l_top).map(|l| terms.iter().filter(|t| t.0 == kind && t.1 == l).map(|t| t.2).sum()).collect()
    };
    (ls.iter().sum(), l_tail_estimate(&ls))
}

/// Runs every requested `(state, contribution, kind)` cell in a fixed order:
/// states as listed, then contributions as listed, then kinds.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput> {
    let mut st = Stages(Vec::new());
    let spec = spectrum(cfg, &mut st)?;
    let basis = st.run("basis", || OrbitalBasis::from_spectrum(&spec, &cfg.kappas(), cfg.basis_n))?;
    let needs_pair = cfg.wants(Contribution::CoulombLadder) || cfg.wants(Contribution::OnePhotonCorrelated);
    let needs_photon = cfg.contributions.iter().any(|c| c.needs_photon());
    let ints = if needs_pair { Some(st.run("coulomb-integrals", || Ok(CoulombIntegrals::new(&basis)))?) } else { None };
    let kinds = gauge_kinds(cfg.gauge);
    let ctx = if needs_photon { Some(st.run("photon-context", || Ok(PhotonContext::new(&basis, cfg.gauge, &kinds, cfg.l_max)))?) } else { None };
    let opts = PairOptions::default();
    let to_uh = UH_PER_HARTREE;

    let mut records = Vec::new();
    for state in &cfg.states {
        let (a, b) = pair_of(&basis, state)?;
        let space = PairSpace::new(&basis, state.big_j, true, state.exchange);
        let reference = match &ints {
            Some(ints) => Some(st.run("coulomb-pair", || Reference::new(&basis, ints, space.clone(), (a, b), 1.0, &opts))?),
            None => None,
        };
        for &contribution in &cfg.contributions {
            let record = |kind, value, tail, k_nodes, iterations| ContributionRecord {
                state: state.label.clone(),
                kind,
                dressing: contribution,
                value_uh: value * to_uh,
                l_tail_uh: tail * to_uh,
                k_nodes,
                iterations,
            };
            match contribution {
                Contribution::CoulombLadder => {
                    let r = reference.as_ref().expect("pair stage ran");
                    records.push(record(InteractionKind::Coulomb, r.energy - r.e0, 0.0, 0, r.pair.iterations));
                }
                Contribution::OnePhoton => {
                    let ctx = ctx.as_ref().expect("photon context built");
                    let i = space.position(a, b).ok_or_else(|| Error::InvalidModel(format!("{} is not in its pair space", state.label)))?;
                    let e = space.h0[i];
                    let poles: Vec<f64> = [(a, a), (a, b), (b, b)].iter().map(|&(p, q)| (e - basis.energy(p) - basis.energy(q)) / cfg.c).collect();
                    let kg = st.run("kgrid", || make_kgrid(cfg.kgrid_n, cfg.kgrid_k0, &poles))?;
                    let el = st.run("photon-exchange", || one_photon_matrix_element(ctx, &space, i, i, e, &kg))?;
                    let terms: Vec<_> = el.per_term.iter().map(|(t, v)| (t.kind, t.l, *v)).collect();
                    for kind in kinds {
                        let (v, tail) = summarize(kind, &terms);
                        records.push(record(kind, v, tail, kg.len(), 0));
                    }
                }
                Contribution::OnePhotonCorrelated => {
                    let ctx = ctx.as_ref().expect("photon context built");
                    let ints = ints.as_ref().expect("integrals built");
                    let r = reference.as_ref().expect("pair stage ran");
                    let sectors = st.run("photon-sectors", || photon_sectors(ctx, ints, r))?;
                    let poles = sector_poles(r, &sectors, cfg.c);
                    let kg = st.run("kgrid", || make_kgrid(cfg.kgrid_n, cfg.kgrid_k0, &poles))?;
                    let family = st.run("photon-exchange", || integrate_photon_family(ctx, r, &sectors, &kg))?;
                    let terms: Vec<_> = family.terms.iter().zip(family.energies(r)).map(|(t, v)| (t.kind, t.l, v)).collect();
                    for kind in kinds {
                        let (v, tail) = summarize(kind, &terms);
                        records.push(record(kind, v, tail, kg.len(), r.pair.iterations));
                    }
                }
            }
        }
    }
    if let Some(bad) = records.iter().find(|r| !r.value_uh.is_finite() || !r.l_tail_uh.is_finite()) {
        return Err(Error::NoConvergence { iterations: bad.iterations, residual: f64::NAN }.at("photon-exchange"));
    }

    let manifest = Manifest {
        config_hash: cfg.hash(),
        parameters: KEYS.iter().map(|&k| (k.to_string(), cfg.value(k), cfg.defaulted.contains(&k))).collect(),
        constants: vec![
            ("const.uh_per_hartree".into(), UH_PER_HARTREE.to_string()),
            ("const.pair_tol".into(), opts.tol.to_string()),
            ("const.pair_max_iter".into(), opts.max_iter.to_string()),
            ("const.pair_diis".into(), opts.diis.to_string()),
            ("const.kgrid_min_pole".into(), MIN_POLE.to_string()),
            ("const.kgrid_pole_clearance".into(), POLE_CLEARANCE.to_string()),
        ],
        stages: st.0,
    };
    Ok(RunOutput { records, manifest })
}
