//! Column-oriented covariate tables.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => {
                Column::Categorical(rows.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }
}

/// Named columns of equal length. The row count survives removing every
/// column, so intercept-only models can be fitted on an empty table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataTable {
    names: Vec<String>,
    columns: Vec<Column>,
    nrows: usize,
}

impl DataTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Table with `n` rows and no columns.
    pub fn with_rows(n: usize) -> Self {
        DataTable {
            nrows: n,
            ..Self::default()
        }
    }

    pub fn with_numeric(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        self.push(name.into(), Column::Numeric(values))?;
        Ok(self)
    }

    pub fn with_categorical(mut self, name: impl Into<String>, values: Vec<String>) -> Result<Self> {
        self.push(name.into(), Column::Categorical(values))?;
        Ok(self)
    }

    pub fn push(&mut self, name: String, column: Column) -> Result<()> {
        if self.names.contains(&name) {
            return Err(Error::InvalidColumn {
                column: name,
                detail: "duplicate column name".into(),
            });
        }
        if (!self.columns.is_empty() || self.nrows > 0) && self.nrows != column.len() {
            return Err(Error::InvalidColumn {
                column: name,
                detail: format!("has {} rows, expected {}", column.len(), self.nrows),
            });
        }
        self.nrows = column.len();
        self.names.push(name);
        self.columns.push(column);
        Ok(())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Categorical(_) => Err(Error::InvalidColumn {
                column: name.to_string(),
                detail: "expected a numeric column".into(),
            }),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> DataTable {
        DataTable {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            nrows: rows.len(),
        }
    }

    /// Removes a column and returns it.
    pub fn take(&mut self, name: &str) -> Result<Column> {
        let idx = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        self.names.remove(idx);
        Ok(self.columns.remove(idx))
    }

    /// Reads a CSV file with a header row. Columns whose every cell parses as a
    /// float become numeric, the rest categorical.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Csv(e.to_string()))?;
            for (c, field) in record.iter().enumerate() {
                raw[c].push(field.to_string());
            }
        }
        let mut table = DataTable::with_rows(raw.first().map_or(0, Vec::len));
        for (name, cells) in headers.into_iter().zip(raw) {
            let parsed: Option<Vec<f64>> = cells.iter().map(|s| s.trim().parse().ok()).collect();
            let column = match parsed {
                Some(v) => Column::Numeric(v),
                None => Column::Categorical(cells),
            };
            table.push(name, column)?;
        }
        Ok(table)
    }
}
