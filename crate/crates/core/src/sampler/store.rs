//! Flat scalar view of the globals and the on-disk layout of a posterior.
//!
//! A posterior directory holds `draws_globals.csv` (one row per retained
//! draw), `diagnostics.csv`, `acceptance.csv`, `posterior.kv`,
//! `patients_std.csv`, `scaling.csv`, `draws_patients.bin` and optionally
//! `draws_latent_<id>.bin`. Binary files are little-endian: two `u64`
//! counts followed by `f64` values.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Matrix3;

use super::config::Variant;
use super::run::{Diagnostic, PatientDraw, PosteriorSample};
use crate::cohort::Scaling;
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::outcome::GlobalParams;

fn matrix_entries(diagonal: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..3 {
        for j in i..3 {
            if i == j || !diagonal {
                out.push((i, j));
            }
        }
    }
    out
}

/// Names of the scalars recorded for a variant, with 1-based indices.
pub fn scalar_names(variant: Variant, n_cov: usize) -> Vec<String> {
    let mut out: Vec<String> = (1..=3).map(|l| format!("nu_{l}")).collect();
    for (i, j) in matrix_entries(variant.diagonal()) {
        out.push(format!("Sigma_{}_{}", i + 1, j + 1));
    }
    for j in 1..=n_cov {
        for l in 1..=3 {
            out.push(format!("beta_{j}_{l}"));
        }
    }
    out.extend((1..=3).map(|l| format!("gamma_{l}")));
    if variant.has_latent() {
        out.push("theta".into());
        for (i, j) in matrix_entries(variant.diagonal()) {
            out.push(format!("Phi_{}_{}", i + 1, j + 1));
        }
        for k in ["ou_var", "ou_decay", "rho", "varpi"] {
            out.push(k.into());
        }
    }
    out
}

pub fn scalars(g: &GlobalParams, variant: Variant) -> Vec<f64> {
    let mut out = g.nu.to_vec();
    for (i, j) in matrix_entries(variant.diagonal()) {
        out.push(g.sigma[(i, j)]);
    }
    for b in &g.beta {
        out.extend_from_slice(b);
    }
    out.extend_from_slice(&g.gamma);
    if variant.has_latent() {
        out.push(g.theta);
        for (i, j) in matrix_entries(variant.diagonal()) {
            out.push(g.phi[(i, j)]);
        }
        out.extend([g.ou_var, g.ou_decay, g.rho, g.varpi]);
    }
    out
}

/// Inverse of [`scalars`]. Quantities a variant does not record are set to
/// inert values (no time effects, no medication process).
pub fn from_scalars(v: &[f64], variant: Variant, n_cov: usize) -> Result<GlobalParams> {
    let want = scalar_names(variant, n_cov).len();
    if v.len() != want {
        return Err(Error::Config(format!(
            "expected {want} scalars, found {}",
            v.len()
        )));
    }
    let mut it = v.iter().copied();
    let mut next = || it.next().unwrap();
    let nu = [next(), next(), next()];
    let mut sigma = Matrix3::zeros();
    for (i, j) in matrix_entries(variant.diagonal()) {
        sigma[(i, j)] = next();
        sigma[(j, i)] = sigma[(i, j)];
    }
    let beta = (0..n_cov).map(|_| [next(), next(), next()]).collect();
    let gamma = [next(), next(), next()];
    let mut g = GlobalParams {
        beta,
        gamma,
        nu,
        sigma,
        theta: 1.0,
        phi: Matrix3::identity() * 1e-300,
        ou_var: 1e-300,
        ou_decay: 1.0,
        rho: 0.0,
        varpi: 0.0,
    };
    if variant.has_latent() {
        g.theta = next();
        let mut phi = Matrix3::zeros();
        for (i, j) in matrix_entries(variant.diagonal()) {
            phi[(i, j)] = next();
            phi[(j, i)] = phi[(i, j)];
        }
        g.phi = phi;
        g.ou_var = next();
        g.ou_decay = next();
        g.rho = next();
        g.varpi = next();
    }
    Ok(g)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn bin_bytes(a: usize, b: usize, values: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(a as u64).to_le_bytes());
    out.extend_from_slice(&(b as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_bin(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: msg.to_string(),
    };
    if bytes.len() < 16 || (bytes.len() - 16) % 8 != 0 {
        return Err(bad("truncated binary draws"));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap()) as usize;
    let (a, b) = (word(0), word(1));
    let values: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if a.checked_mul(b).is_none() {
        return Err(bad("binary header overflows"));
    }
    Ok((a, b, values))
}

fn safe_id(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn write_posterior(dir: &Path, s: &PosteriorSample) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n_cov = s.covariate_names.len();

    let mut kv = KvMap::new();
    kv.insert("variant", s.variant);
    kv.insert("chains", s.chains);
    kv.insert("draws", s.n_draws());
    kv.insert("patients", s.patient_ids.len());
    kv.insert("covariates", s.covariate_names.join(","));
    write_file(&dir.join("posterior.kv"), kv.render().as_bytes())?;

    let mut text = String::from("chain,");
    text.push_str(&scalar_names(s.variant, n_cov).join(","));
    text.push('\n');
    for (g, c) in s.draws.iter().zip(&s.chain_of) {
        text.push_str(&c.to_string());
        for v in scalars(g, s.variant) {
            text.push(',');
            text.push_str(&v.to_string());
        }
        text.push('\n');
    }
    write_file(&dir.join("draws_globals.csv"), text.as_bytes())?;

    let mut text = String::from("parameter,rhat,ess\n");
    for d in &s.diagnostics {
        text.push_str(&format!("{},{},{}\n", d.name, d.rhat, d.ess));
    }
    write_file(&dir.join("diagnostics.csv"), text.as_bytes())?;

    let mut text = String::from("move,rate\n");
    for (k, r) in &s.acceptance {
        text.push_str(&format!("{k},{r}\n"));
    }
    write_file(&dir.join("acceptance.csv"), text.as_bytes())?;

    let mut text = String::from("covariate,mean,sd\n");
    for (name, sc) in s.covariate_names.iter().zip(&s.scaling) {
        text.push_str(&format!("{name},{},{}\n", sc.mean, sc.sd));
    }
    write_file(&dir.join("scaling.csv"), text.as_bytes())?;

    let mut text = String::from("id");
    for name in &s.covariate_names {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    for (id, x) in s.patient_ids.iter().zip(&s.patient_x) {
        text.push_str(id);
        for v in x {
            text.push(',');
            text.push_str(&v.to_string());
        }
        text.push('\n');
    }
    write_file(&dir.join("patients_std.csv"), text.as_bytes())?;

    let values = s
        .patients
        .iter()
        .flat_map(|row| row.iter().flat_map(|p| p.iter().copied()));
    write_file(
        &dir.join("draws_patients.bin"),
        &bin_bytes(s.n_draws(), s.patient_ids.len(), values),
    )?;

    for (id, paths) in s.patient_ids.iter().zip(&s.latent) {
        let len = paths.first().map_or(0, |p| p.len());
        let bytes = bin_bytes(
            paths.len(),
            len,
            paths.iter().flat_map(|p| p.iter().copied()),
        );
        write_file(
            &dir.join(format!("draws_latent_{}.bin", safe_id(id))),
            &bytes,
        )?;
    }
    Ok(())
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: k as u64 + 2,
            msg: e.to_string(),
        })?;
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

fn num(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: line as u64 + 2,
        msg: format!("not a number: {s:?}"),
    })
}

pub fn read_posterior(dir: &Path) -> Result<PosteriorSample> {
    let kv = KvMap::read(&dir.join("posterior.kv"))?;
    let variant: Variant = kv
        .get("variant")
        .ok_or_else(|| Error::Config("posterior.kv lacks variant".into()))?
        .parse()?;
    let mut chains = 1usize;
    kv.take("chains", &mut chains)?;
    let covariate_names: Vec<String> = kv
        .get("covariates")
        .map(|s| {
            s.split(',')
                .filter(|t| !t.is_empty())
                .map(String::from)
                .collect()
        })
        .unwrap_or_default();
    let n_cov = covariate_names.len();

    let path = dir.join("draws_globals.csv");
    let (header, rows) = read_csv(&path)?;
    let names = scalar_names(variant, n_cov);
    if header.len() != names.len() + 1 || header[1..] != names[..] {
        return Err(Error::Parse {
            path,
            line: 1,
            msg: "unexpected columns".into(),
        });
    }
    let mut draws = Vec::with_capacity(rows.len());
    let mut chain_of = Vec::with_capacity(rows.len());
    for (k, row) in rows.iter().enumerate() {
        chain_of.push(num(&path, k, &row[0])? as usize);
        let v = row[1..]
            .iter()
            .map(|s| num(&path, k, s))
            .collect::<Result<Vec<_>>>()?;
        draws.push(from_scalars(&v, variant, n_cov)?);
    }

    let path = dir.join("diagnostics.csv");
    let (_, rows) = read_csv(&path)?;
    let diagnostics = rows
        .iter()
        .enumerate()
        .map(|(k, r)| {
            Ok(Diagnostic {
                name: r[0].clone(),
                rhat: num(&path, k, &r[1])?,
                ess: num(&path, k, &r[2])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let path = dir.join("acceptance.csv");
    let (_, rows) = read_csv(&path)?;
    let acceptance = rows
        .iter()
        .enumerate()
        .map(|(k, r)| Ok((r[0].clone(), num(&path, k, &r[1])?)))
        .collect::<Result<Vec<_>>>()?;

    let path = dir.join("scaling.csv");
    let (_, rows) = read_csv(&path)?;
    let scaling = rows
        .iter()
        .enumerate()
        .map(|(k, r)| {
            Ok(Scaling {
                mean: num(&path, k, &r[1])?,
                sd: num(&path, k, &r[2])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let path = dir.join("patients_std.csv");
    let (_, rows) = read_csv(&path)?;
    let mut patient_ids = Vec::new();
    let mut patient_x = Vec::new();
    for (k, r) in rows.iter().enumerate() {
        patient_ids.push(r[0].clone());
        patient_x.push(
            r[1..]
                .iter()
                .map(|s| num(&path, k, s))
                .collect::<Result<Vec<_>>>()?,
        );
    }

    let path = dir.join("draws_patients.bin");
    let (nd, np, values) = read_bin(&path)?;
    if nd != draws.len() || np != patient_ids.len() || values.len() != nd * np * 6 {
        return Err(Error::Parse {
            path,
            line: 0,
            msg: "patient draws do not match the globals and patient list".into(),
        });
    }
    let patients: Vec<Vec<PatientDraw>> = values
        .chunks_exact(np * 6)
        .map(|row| row.chunks_exact(6).map(|c| c.try_into().unwrap()).collect())
        .collect();
    let patients = if np == 0 {
        vec![Vec::new(); nd]
    } else {
        patients
    };

    let mut latent = Vec::new();
    for id in &patient_ids {
        let p = dir.join(format!("draws_latent_{}.bin", safe_id(id)));
        if !p.exists() {
            latent.clear();
            break;
        }
        let (n, len, values) = read_bin(&p)?;
        let paths: Vec<Vec<f64>> = if len == 0 {
            vec![Vec::new(); n]
        } else {
            values.chunks_exact(len).map(|c| c.to_vec()).collect()
        };
        latent.push(paths);
    }

    Ok(PosteriorSample {
        variant,
        chains,
        covariate_names,
        scaling,
        patient_ids,
        patient_x,
        draws,
        chain_of,
        patients,
        latent,
        acceptance,
        diagnostics,
    })
}
