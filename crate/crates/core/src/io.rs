//! File formats: market files (TOML or JSON), price-path CSV, number formatting.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::market::{DiscreteMarket, PricePath};

const SIGNIFICANT_DIGITS: i32 = 12;

/// Decimal rendering with 12 significant digits, trailing zeros trimmed.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-6..=15).contains(&exp) {
        return format!("{:.*e}", (SIGNIFICANT_DIGITS - 1) as usize, x);
    }
    let decimals = (SIGNIFICANT_DIGITS - 1 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarketFormat {
    Toml,
    Json,
}

impl MarketFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => MarketFormat::Json,
            _ => MarketFormat::Toml,
        }
    }
}

/// Parses a market description with keys `samples`, `pmf1`, `pmf2`, … `pmfM`.
pub fn parse_market(text: &str, format: MarketFormat) -> Result<DiscreteMarket> {
    let table: BTreeMap<String, Vec<f64>> = match format {
        MarketFormat::Toml => toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?,
        MarketFormat::Json => {
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
        }
    };
    let samples = table
        .get("samples")
        .cloned()
        .ok_or_else(|| Error::Parse("missing key `samples`".into()))?;
    let mut pmfs = Vec::new();
    while let Some(p) = table.get(&format!("pmf{}", pmfs.len() + 1)) {
        pmfs.push(p.clone());
    }
    if pmfs.is_empty() {
        return Err(Error::Parse("missing key `pmf1`".into()));
    }
    if let Some(extra) = table
        .keys()
        .find(|k| *k != "samples" && !(1..=pmfs.len()).any(|i| **k == format!("pmf{i}")))
    {
        return Err(Error::Parse(format!("unexpected key `{extra}`")));
    }
    DiscreteMarket::new(samples, pmfs)
}

pub fn read_market(path: &Path) -> Result<DiscreteMarket> {
    let text = std::fs::read_to_string(path)?;
    parse_market(&text, MarketFormat::from_path(path))
}

pub fn market_to_string(market: &DiscreteMarket, format: MarketFormat) -> Result<String> {
    let mut table = BTreeMap::new();
    table.insert("samples".to_string(), market.sample_space().to_vec());
    for (i, pmf) in market.pmfs().iter().enumerate() {
        table.insert(format!("pmf{}", i + 1), pmf.clone());
    }
    match format {
        MarketFormat::Toml => toml::to_string(&table).map_err(|e| Error::Parse(e.to_string())),
        MarketFormat::Json => {
            serde_json::to_string_pretty(&table).map_err(|e| Error::Parse(e.to_string()))
        }
    }
}

pub fn write_market(path: &Path, market: &DiscreteMarket) -> Result<()> {
    let text = market_to_string(market, MarketFormat::from_path(path))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a path CSV with header `period,x1,x2[,...,xm]`.
pub fn read_path_from<R: Read>(reader: R) -> Result<PricePath> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let n_assets = headers.len().saturating_sub(1);
    if headers.get(0) != Some("period") || n_assets == 0 {
        return Err(Error::Parse(
            "path CSV header must be `period,x1,x2[,...]`".into(),
        ));
    }
    for (i, h) in headers.iter().skip(1).enumerate() {
        if h != format!("x{}", i + 1) {
            return Err(Error::Parse(format!("unexpected column `{h}`")));
        }
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad value `{v}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    PricePath::new(n_assets, rows)
}

pub fn read_path(path: &Path) -> Result<PricePath> {
    read_path_from(std::fs::File::open(path)?)
}

pub fn write_path_to<W: Write>(path: &PricePath, mut out: W) -> std::io::Result<()> {
    let header: Vec<String> = (1..=path.n_assets()).map(|i| format!("x{i}")).collect();
    writeln!(out, "period,{}", header.join(","))?;
    for (n, row) in path.rows().iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|&x| fmt_num(x)).collect();
        writeln!(out, "{},{}", n + 1, cells.join(","))?;
    }
    Ok(())
}

pub fn write_path(file: &Path, path: &PricePath) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(file)?);
    write_path_to(path, f)?;
    Ok(())
}
