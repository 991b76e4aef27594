//! Regenerate the shipped assets: parameter file, OCP tables, load profiles
//! and an example run configuration.
//!
//! cargo run --release -p coreshell --example export_assets -- assets

use std::path::{Path, PathBuf};

use coreshell::io::write_json;
use coreshell::ocp::OcpSet;
use coreshell::profile::LoadProfile;
use coreshell::ParameterSet;

fn main() -> coreshell::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "assets".into()));
    for sub in ["params", "ocp", "profiles", "config"] {
        std::fs::create_dir_all(root.join(sub))?;
    }
    let set = ParameterSet::lfp_reference();
    let mut value = serde_json::to_value(&set).expect("parameter set serializes");
    value["_notes"] = serde_json::json!({
        "identified": ["windows", "r_s_p", "r_s_n", "d_s_p", "d_s_n", "eps_p", "eps_n", "k_p", "k_n", "a_cell", "r_l", "rates"],
        "assumed": ["l_n", "l_s", "l_p", "c_s_max_n", "c_s_max_p", "c_e0", "d_e", "eps_e_n", "eps_e_s", "eps_e_p", "t_plus", "brugg", "nu", "temperature"],
        "comment": "assumed entries are literature-typical completions, not identified values"
    });
    write_json(&root.join("params/lfp_reference.json"), &value)?;

    let ocp = OcpSet::synthetic(&set.cell)?;
    ocp.positive_charge.write_csv(&root.join("ocp/lfp_charge.csv"))?;
    ocp.positive_discharge.write_csv(&root.join("ocp/lfp_discharge.csv"))?;
    ocp.negative.write_csv(&root.join("ocp/graphite.csv"))?;

    let i1 = set.cell.c_rate_current(1.0);
    for (label, c) in [("c4", 0.25), ("c2", 0.5), ("1c", 1.0)] {
        // nominal duration; at higher rates the voltage limit ends the run earlier
        let duration = 3600.0 / c;
        write_profile(&root, &format!("cc_{label}_charge.csv"), &LoadProfile::constant(-c * i1, duration)?)?;
        write_profile(&root, &format!("cc_{label}_discharge.csv"), &LoadProfile::constant(c * i1, duration)?)?;
    }
    write_profile(&root, "udds_like.csv", &LoadProfile::udds_like(2.0 * i1, 1370.0, 7)?)?;

    let config = serde_json::json!({
        "parameters": "../params/lfp_reference.json",
        "ocp": {
            "positive_charge": "../ocp/lfp_charge.csv",
            "positive_discharge": "../ocp/lfp_discharge.csv",
            "negative": "../ocp/graphite.csv"
        },
        "discretization": { "n_r": 4, "n_e": 9, "scheme": "fvm" },
        "solver": { "dt": 1.0, "method": "trbdf2" },
        "observability": { "stride": 10 }
    });
    write_json(&root.join("config/example.json"), &config)?;
    Ok(())
}

fn write_profile(root: &Path, name: &str, p: &LoadProfile) -> coreshell::Result<()> {
    p.write_csv(&root.join("profiles").join(name))
}
