//! Synthetic QM9-format corpus: small C/N/O/F molecules saturated with
//! hydrogen, raw-format XYZ records and a matching descriptor table.
//!
//! Targets are smooth functions of composition and geometry plus a
//! per-molecule electronic term that also shifts XLogP, so the descriptor
//! text carries information the 3D graph alone does not.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde_json::{json, Value};
use xchem_core::target::HARTREE_TO_EV;

use crate::fsutil::write_atomic;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub count: usize,
    pub seed: u64,
    /// Probability that any one descriptor is absent from the metadata.
    pub missing_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { count: 100, seed: 0, missing_rate: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthRecord {
    pub index: u64,
    pub xyz: String,
    pub metadata: Value,
}

const SYMBOL: [&str; 5] = ["H", "C", "N", "O", "F"];
const VALENCE: [usize; 5] = [1, 4, 3, 2, 1];
const COVALENT: [f64; 5] = [0.31, 0.76, 0.71, 0.66, 0.57];
const MASS: [f64; 5] = [1.008, 12.011, 14.007, 15.999, 18.998];
const ELECTRONEG: [f64; 5] = [2.20, 2.55, 3.04, 3.44, 3.98];
const ALPHA: [f64; 5] = [4.5, 11.9, 7.4, 5.4, 3.8];
const ATOM_ENERGY_HA: [f64; 5] = [-0.500, -37.846, -54.584, -75.064, -99.718];
const H: usize = 0;
const C: usize = 1;
const N: usize = 2;
const O: usize = 3;
const F: usize = 4;

struct Skeleton {
    elem: Vec<usize>,
    pos: Vec<[f64; 3]>,
    bonds: Vec<(usize, usize)>,
}

impl Skeleton {
    fn free_valence(&self, i: usize) -> usize {
        VALENCE[self.elem[i]] - self.bonds.iter().filter(|(a, b)| *a == i || *b == i).count()
    }

    fn neighbors(&self, i: usize) -> Vec<usize> {
        self.bonds.iter().filter_map(|&(a, b)| if a == i { Some(b) } else if b == i { Some(a) } else { None }).collect()
    }

    /// Places a new atom bonded to `parent`, away from existing bonds and atoms.
    fn place(&mut self, parent: usize, elem: usize, rng: &mut ChaCha8Rng) -> bool {
        let len = COVALENT[self.elem[parent]] + COVALENT[elem] + rng.random_range(-0.01..0.01);
        let p = self.pos[parent];
        let bonded: Vec<[f64; 3]> = self.neighbors(parent).iter().map(|&j| unit(sub(self.pos[j], p))).collect();
        let away = bonded.iter().fold([0.0; 3], |acc, b| sub(acc, *b));
        for _ in 0..200 {
            let r = random_unit(rng);
            let d = unit([away[0] + 0.8 * r[0], away[1] + 0.8 * r[1], away[2] + 0.8 * r[2]]);
            if bonded.iter().any(|b| dot(*b, d) > -0.1) {
                continue;
            }
            let q = [p[0] + len * d[0], p[1] + len * d[1], p[2] + len * d[2]];
            let min_gap = if elem == H { 0.95 } else { 1.25 };
            let clash = self
                .pos
                .iter()
                .enumerate()
                .any(|(j, r)| j != parent && norm(sub(*r, q)) < if self.elem[j] == H { 0.95 } else { min_gap });
            if !clash {
                self.elem.push(elem);
                self.pos.push(q);
                self.bonds.push((parent, self.elem.len() - 1));
                return true;
            }
        }
        false
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
fn unit(a: [f64; 3]) -> [f64; 3] {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}
fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng)];
        if norm(v) > 1e-6 {
            return unit(v);
        }
    }
}

fn draw_element(rng: &mut ChaCha8Rng) -> usize {
    match rng.random_range(0..100) {
        0..70 => C,
        70..82 => N,
        82..96 => O,
        _ => F,
    }
}

fn build(rng: &mut ChaCha8Rng) -> Skeleton {
    loop {
        let heavy = rng.random_range(3..=9usize);
        let mut s = Skeleton { elem: vec![C], pos: vec![[0.0; 3]], bonds: Vec::new() };
        let mut ok = true;
        while s.elem.len() < heavy && ok {
            let open: Vec<usize> = (0..s.elem.len()).filter(|&i| s.free_valence(i) > 0).collect();
            let total_free: usize = open.iter().map(|&i| s.free_valence(i)).sum();
            let mut elem = draw_element(rng);
            if total_free + VALENCE[elem] - 2 == 0 && s.elem.len() + 1 < heavy {
                elem = C;
            }
            let parent = open[rng.random_range(0..open.len())];
            ok = s.place(parent, elem, rng);
        }
        for i in 0..s.elem.len() {
            for _ in 0..s.free_valence(i) {
                ok &= s.place(i, H, rng);
            }
        }
        if ok {
            return s;
        }
    }
}

struct Features {
    counts: [usize; 5],
    formula: String,
    mass: f64,
    donors: usize,
    acceptors: usize,
    rotatable: usize,
    psa: f64,
    charges: Vec<f64>,
}

fn features(s: &Skeleton) -> Features {
    let mut counts = [0usize; 5];
    for &e in &s.elem {
        counts[e] += 1;
    }
    let mut formula = String::new();
    for (e, sym) in [(C, "C"), (H, "H"), (F, "F"), (N, "N"), (O, "O")] {
        match counts[e] {
            0 => {}
            1 => formula.push_str(sym),
            n => {
                let _ = write!(formula, "{sym}{n}");
            }
        }
    }
    let mass = s.elem.iter().map(|&e| MASS[e]).sum();
    let h_on = |i: usize| s.neighbors(i).iter().filter(|&&j| s.elem[j] == H).count();
    let heavy_deg = |i: usize| s.neighbors(i).iter().filter(|&&j| s.elem[j] != H).count();
    let mut donors = 0;
    let mut psa = 0.0;
    for i in 0..s.elem.len() {
        let nh = h_on(i);
        match s.elem[i] {
            N => {
                donors += usize::from(nh > 0);
                psa += [3.24, 12.03, 26.02, 26.02][nh.min(3)];
            }
            O => {
                donors += usize::from(nh > 0);
                psa += if nh > 0 { 20.23 } else { 9.23 };
            }
            _ => {}
        }
    }
    let rotatable = s
        .bonds
        .iter()
        .filter(|&&(a, b)| s.elem[a] != H && s.elem[b] != H && heavy_deg(a) > 1 && heavy_deg(b) > 1)
        .count();
    // Electronegativity-equalized partial charges.
    let mut charges = vec![0.0; s.elem.len()];
    for &(a, b) in &s.bonds {
        let dq = 0.18 * (ELECTRONEG[s.elem[b]] - ELECTRONEG[s.elem[a]]);
        charges[a] += dq;
        charges[b] -= dq;
    }
    Features { counts, formula, mass, donors, acceptors: counts[N] + counts[O] + counts[F], rotatable, psa, charges }
}

fn name(f: &Features, s: &Skeleton) -> String {
    const STEM: [&str; 10] = ["", "meth", "eth", "prop", "but", "pent", "hex", "hept", "oct", "non"];
    let mut prefixes = Vec::new();
    if f.counts[F] > 0 {
        prefixes.push(multiplied(f.counts[F], "fluoro"));
    }
    let mut suffixes = Vec::new();
    let hydroxy = (0..s.elem.len()).filter(|&i| s.elem[i] == O && s.neighbors(i).iter().any(|&j| s.elem[j] == H)).count();
    let ethers = f.counts[O] - hydroxy;
    if ethers > 0 {
        prefixes.push(multiplied(ethers, "oxa"));
    }
    if f.counts[N] > 0 {
        suffixes.push(multiplied(f.counts[N], "amine"));
    }
    if hydroxy > 0 {
        suffixes.push(multiplied(hydroxy, "ol"));
    }
    let mut out = prefixes.join("");
    out.push_str(STEM[f.counts[C].min(9)]);
    out.push_str("ane");
    for sfx in suffixes {
        out.push('-');
        out.push_str(&sfx);
    }
    out
}

fn multiplied(n: usize, word: &str) -> String {
    const MULT: [&str; 6] = ["", "", "di", "tri", "tetra", "penta"];
    format!("{}{word}", MULT[n.min(5)])
}

fn smiles(s: &Skeleton) -> String {
    fn visit(s: &Skeleton, i: usize, from: Option<usize>, out: &mut String) {
        out.push_str(SYMBOL[s.elem[i]]);
        let kids: Vec<usize> = s.neighbors(i).into_iter().filter(|&j| Some(j) != from && s.elem[j] != H).collect();
        for (k, &j) in kids.iter().enumerate() {
            if k + 1 < kids.len() {
                out.push('(');
                visit(s, j, Some(i), out);
                out.push(')');
            } else {
                visit(s, j, Some(i), out);
            }
        }
    }
    let mut out = String::new();
    visit(s, 0, None, &mut out);
    out
}

/// Raw QM9 number formatting, including the `*^` exponent marker.
fn qm9_number(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        let s = format!("{x:.4e}");
        s.replace('e', "*^")
    } else {
        format!("{x:.6}")
    }
}

pub fn generate_one(index: u64, cfg: &SynthConfig) -> SynthRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index);
    let s = build(&mut rng);
    let f = features(&s);
    let n = s.elem.len();
    let com = {
        let m: f64 = s.elem.iter().map(|&e| MASS[e]).sum();
        let mut c = [0.0; 3];
        for (e, p) in s.elem.iter().zip(&s.pos) {
            for k in 0..3 {
                c[k] += MASS[*e] * p[k] / m;
            }
        }
        c
    };
    let pos: Vec<[f64; 3]> = s.pos.iter().map(|p| sub(*p, com)).collect();

    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let electronic: f64 = noise.sample(&mut rng);
    let [nh, nc, nn, no, nf] = f.counts.map(|c| c as f64);
    let heavy_bonds = s.bonds.iter().filter(|&&(a, b)| s.elem[a] != H && s.elem[b] != H).count() as f64;

    let dipole = {
        let mut d = [0.0; 3];
        for (q, p) in f.charges.iter().zip(&pos) {
            for k in 0..3 {
                d[k] += q * p[k];
            }
        }
        norm(d) * 4.803
    };
    let alpha = s.elem.iter().map(|&e| ALPHA[e]).sum::<f64>() + 0.4 * noise.sample(&mut rng);
    let homo = -7.1 + 0.42 * nn / (nc + 1.0) - 0.22 * no - 0.35 * nf + 0.03 * nc + 0.30 * electronic + 0.03 * noise.sample(&mut rng);
    let lumo = 1.4 - 0.28 * no - 0.16 * nn - 0.24 * nf - 0.05 * nc - 0.12 * electronic + 0.03 * noise.sample(&mut rng);
    let gap = lumo - homo;
    let r2 = s.elem.iter().zip(&pos).map(|(&e, p)| (e.max(1) as f64) * dot(*p, *p)).sum::<f64>() * 3.5710;
    let zpve = 0.187 * nh + 0.071 * heavy_bonds + 0.002 * noise.sample(&mut rng);
    let u0 = s.elem.iter().map(|&e| ATOM_ENERGY_HA[e]).sum::<f64>() * HARTREE_TO_EV
        - 4.3 * heavy_bonds
        - 4.2 * nh
        + zpve
        + 0.05 * noise.sample(&mut rng);
    let u298 = u0 + 0.0257 * (3.0 + 0.5 * n as f64);
    let xlogp = 0.52 * nc - 0.65 * no - 0.95 * nn + 0.18 * nf - 0.05 * nh + 0.9 * electronic;

    let mut xyz = String::new();
    let _ = writeln!(xyz, "{n}");
    let inertia: f64 = s.elem.iter().zip(&pos).map(|(&e, p)| MASS[e] * dot(*p, *p)).sum::<f64>().max(1.0);
    let rot = 505.379 / inertia;
    let fields = [
        rot * 1.9,
        rot * 1.1,
        rot,
        dipole,
        alpha,
        homo / HARTREE_TO_EV,
        lumo / HARTREE_TO_EV,
        gap / HARTREE_TO_EV,
        r2,
        zpve / HARTREE_TO_EV,
        u0 / HARTREE_TO_EV,
        u298 / HARTREE_TO_EV,
        (u298 + 0.0257) / HARTREE_TO_EV,
        (u298 - 0.9) / HARTREE_TO_EV,
        6.0 + 1.5 * n as f64,
    ];
    let _ = write!(xyz, "gdb {index}");
    for v in fields {
        let _ = write!(xyz, "\t{}", qm9_number(v));
    }
    xyz.push('\n');
    for ((e, p), q) in s.elem.iter().zip(&pos).zip(&f.charges) {
        let _ = writeln!(xyz, "{}\t{}\t{}\t{}\t{}", SYMBOL[*e], qm9_number(p[0]), qm9_number(p[1]), qm9_number(p[2]), qm9_number(*q));
    }
    let modes = (3 * n).saturating_sub(6).max(1);
    let mut freqs: Vec<f64> = (0..modes).map(|_| rng.random_range(80.0..3800.0)).collect();
    freqs.sort_by(f64::total_cmp);
    let freq_line: Vec<String> = freqs.iter().map(|x| format!("{x:.4}")).collect();
    let _ = writeln!(xyz, "{}", freq_line.join("\t"));
    let smi = smiles(&s);
    let _ = writeln!(xyz, "{smi}\t{smi}");
    let _ = writeln!(xyz, "InChI=1S/{}/c{index}\tInChI=1S/{}/c{index}", f.formula, f.formula);

    let iupac = name(&f, &s);
    let mut meta = serde_json::Map::new();
    meta.insert("id".into(), json!(format!("gdb_{index}")));
    meta.insert("CID".into(), json!(100_000 + index));
    let descriptors = [
        ("IUPAC", json!(iupac)),
        ("Formula", json!(f.formula)),
        ("MolecularWeight", json!((f.mass * 100.0).round() / 100.0)),
        ("XLogP", json!((xlogp * 10.0).round() / 10.0)),
        ("HBondDonors", json!(f.donors)),
        ("HBondAcceptors", json!(f.acceptors)),
        ("RotatableBonds", json!(f.rotatable)),
        ("PSA", json!((f.psa * 10.0).round() / 10.0)),
        ("Synonyms", json!([iupac.replace('-', " "), format!("{} isomer {index}", f.formula), smi])),
    ];
    for (key, value) in descriptors {
        if cfg.missing_rate <= 0.0 || rng.random::<f64>() >= cfg.missing_rate {
            meta.insert(key.into(), value);
        }
    }
    SynthRecord { index, xyz, metadata: Value::Object(meta) }
}

pub fn generate(cfg: &SynthConfig) -> Vec<SynthRecord> {
    (1..=cfg.count as u64).into_par_iter().map(|i| generate_one(i, cfg)).collect()
}

/// Writes `dsgdb9nsd_<index>.xyz` files and a JSON Lines descriptor table.
pub fn write_corpus(xyz_dir: &Path, metadata: &Path, cfg: &SynthConfig) -> Result<usize> {
    let records = generate(cfg);
    fs::create_dir_all(xyz_dir).with_context(|| format!("creating {}", xyz_dir.display()))?;
    let mut meta = String::new();
    for r in &records {
        write_atomic(&xyz_dir.join(format!("dsgdb9nsd_{:06}.xyz", r.index)), r.xyz.as_bytes())?;
        meta.push_str(&r.metadata.to_string());
        meta.push('\n');
    }
    write_atomic(metadata, meta.as_bytes())?;
    Ok(records.len())
}
