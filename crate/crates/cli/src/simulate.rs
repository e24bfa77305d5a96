//! `mixreg simulate`: writes a seeded draw of one simulation design.

use std::path::Path;

use mixreg::simgen::{SimDataset, SimDesign};
use mixreg::{Column, DataTable, MixtureModel, ModelSpec, ParamVector};
use serde::Serialize;

use crate::error::Result;
use crate::output::{fmt_float, write_json, CsvOut};

#[derive(Debug, Serialize)]
struct TruthReport<'a> {
    design: &'a SimDesign,
    pi: &'a [f64],
    spec: &'a ModelSpec,
    coefficient_names: Option<Vec<String>>,
    psi: Option<&'a ParamVector>,
    test_seed: Option<u64>,
}

fn write_table(table: &DataTable, path: &Path) -> Result<()> {
    let names = table.names().to_vec();
    let cols: Vec<&Column> = names.iter().map(|n| table.column(n)).collect::<mixreg::Result<_>>()?;
    let mut csv = CsvOut::new(&names);
    for i in 0..table.nrows() {
        csv.row(cols.iter().zip(&names).map(|(c, name)| match c {
            Column::Numeric(v) if name == "true_label" => (v[i] as usize).to_string(),
            Column::Numeric(v) => fmt_float(v[i]),
            Column::Categorical(v) => v[i].clone(),
        }));
    }
    csv.finish(path)
}

/// Writes `data.csv` and `truth.json`, plus `test.csv` drawn from the same
/// truth when `test_seed` is given.
pub fn run_simulate(design: &SimDesign, test_seed: Option<u64>, dir: &Path) -> Result<SimDataset> {
    design.check_grid()?;
    let data = design.generate()?;
    write_table(&data.to_table()?, &dir.join("data.csv"))?;
    if let Some(seed) = test_seed {
        write_table(&data.resample(seed)?.to_table()?, &dir.join("test.csv"))?;
    }
    let coefficient_names = match &data.truth.psi {
        Some(_) => {
            let m = MixtureModel::new(data.truth.spec.clone(), &data.covariates, data.y.clone())?;
            Some(m.design().coefficient_names())
        }
        None => None,
    };
    let truth = TruthReport {
        design,
        pi: &data.truth.pi,
        spec: &data.truth.spec,
        coefficient_names,
        psi: data.truth.psi.as_ref(),
        test_seed,
    };
    write_json(&dir.join("truth.json"), &truth)?;
    Ok(data)
}
