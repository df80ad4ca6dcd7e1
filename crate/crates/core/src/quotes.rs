//! Ingestion and classification of CALL ask-quote cross-sections.
//!
//! A cross-section always contains the strike-0 quote, which is the ask
//! price of the underlying itself and plays the role of the numeraire
//! asset in every superhedging portfolio.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::efficient::EfficientCurve;
use crate::error::{Error, Result};

/// A single CALL ask quote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub strike: f64,
    pub ask: f64,
    pub ask_size: u32,
    pub maturity: NaiveDate,
    pub observed_at: NaiveDateTime,
}

/// A validated cross-section of CALL asks for one maturity.
///
/// Strikes are strictly increasing and start at exactly 0; every ask is
/// positive. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteCurve {
    strikes: Vec<f64>,
    asks: Vec<f64>,
    pub maturity: NaiveDate,
    pub observed_at: Option<NaiveDateTime>,
    pub spot_hint: Option<f64>,
}

impl QuoteCurve {
    pub fn new(
        strikes: Vec<f64>,
        asks: Vec<f64>,
        maturity: NaiveDate,
        observed_at: Option<NaiveDateTime>,
        spot_hint: Option<f64>,
    ) -> Result<Self> {
        if strikes.len() != asks.len() {
            return Err(Error::validation(
                "asks",
                "strikes and asks must have equal length",
            ));
        }
        if strikes.len() < 2 {
            return Err(Error::InsufficientStrikes {
                needed: 2,
                found: strikes.len(),
            });
        }
        if strikes[0] != 0.0 {
            return Err(Error::MissingNumeraire);
        }
        for w in strikes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::validation(
                    "strikes",
                    format!("strikes must be strictly increasing, got {} after {}", w[1], w[0]),
                ));
            }
        }
        for (i, &a) in asks.iter().enumerate() {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::validation(
                    "asks",
                    format!("ask at strike {} must be positive, got {a}", strikes[i]),
                ));
            }
        }
        Ok(QuoteCurve {
            strikes,
            asks,
            maturity,
            observed_at,
            spot_hint,
        })
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn asks(&self) -> &[f64] {
        &self.asks
    }

    pub fn len(&self) -> usize {
        self.strikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strikes.is_empty()
    }

    /// The strike-0 ask, i.e. the underlying price used by the hedges.
    pub fn spot(&self) -> f64 {
        self.asks[0]
    }

    /// Canonical CSV serialization using the ingestion schema.
    ///
    /// `ask_size` carries the sentinel 1000000 so the output survives any
    /// reasonable `min_ask_size` filter on re-ingestion.
    pub fn to_csv(&self) -> String {
        let at = self
            .observed_at
            .unwrap_or_else(|| self.maturity.and_hms_opt(0, 0, 0).unwrap());
        let mut out = String::from("strike,ask,ask_size,maturity,observed_at\n");
        for (k, a) in self.strikes.iter().zip(&self.asks) {
            out.push_str(&format!(
                "{},{},1000000,{},{}\n",
                k,
                a,
                self.maturity.format("%Y-%m-%d"),
                at.format("%Y-%m-%dT%H:%M:%S")
            ));
        }
        out
    }
}

/// Mesh of a strike set: the largest gap between consecutive nonzero strikes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    /// Mesh of the full quoted strike set (strike 0 excluded).
    pub mesh_all: f64,
    /// Mesh of the efficient strike set, when one was supplied.
    pub mesh_efficient: Option<f64>,
}

fn max_gap(strikes: &[f64]) -> Result<f64> {
    let nonzero: Vec<f64> = strikes.iter().copied().filter(|&k| k > 0.0).collect();
    if nonzero.len() < 2 {
        return Err(Error::InsufficientStrikes {
            needed: 2,
            found: nonzero.len(),
        });
    }
    Ok(nonzero
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max))
}

/// Mesh statistics of a quote curve and, optionally, of its efficient subset.
pub fn mesh(curve: &QuoteCurve, efficient: Option<&EfficientCurve>) -> Result<MeshStats> {
    let mesh_all = max_gap(curve.strikes())?;
    let mesh_efficient = match efficient {
        Some(eff) => Some(max_gap(eff.strikes())?),
        None => None,
    };
    Ok(MeshStats {
        mesh_all,
        mesh_efficient,
    })
}

/// Moneyness bucket of a contract, from deep in-the-money to deep out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Moneyness {
    DeepItm,
    Itm,
    Atm,
    Otm,
    DeepOtm,
}

impl Moneyness {
    pub const ALL: [Moneyness; 5] = [
        Moneyness::DeepItm,
        Moneyness::Itm,
        Moneyness::Atm,
        Moneyness::Otm,
        Moneyness::DeepOtm,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Moneyness::DeepItm => "dITM",
            Moneyness::Itm => "ITM",
            Moneyness::Atm => "ATM",
            Moneyness::Otm => "OTM",
            Moneyness::DeepOtm => "dOTM",
        }
    }
}

/// Bucket edges on forward moneyness, strictly increasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoneynessEdges(pub [f64; 4]);

impl Default for MoneynessEdges {
    fn default() -> Self {
        MoneynessEdges([0.84, 0.94, 1.04, 1.13])
    }
}

impl MoneynessEdges {
    pub fn validate(&self) -> Result<()> {
        if self.0.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("edges", "edges must be strictly increasing"));
        }
        Ok(())
    }
}

/// Classify a contract by forward moneyness `m = strike / (spot * e^{rate*tau})`,
/// the ratio of the strike to the forward price of the underlying.
pub fn moneyness_class(
    spot: f64,
    strike: f64,
    rate: f64,
    tau: f64,
    edges: &MoneynessEdges,
) -> Moneyness {
    let m = strike * (-rate * tau).exp() / spot;
    let e = &edges.0;
    if m < e[0] {
        Moneyness::DeepItm
    } else if m < e[1] {
        Moneyness::Itm
    } else if m < e[2] {
        Moneyness::Atm
    } else if m < e[3] {
        Moneyness::Otm
    } else {
        Moneyness::DeepOtm
    }
}

/// Filters and selectors applied while loading a quote file.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Quotes with a reported ask size below this survive no further. 100
    /// screens out the thin end of the book.
    pub min_ask_size: u32,
    /// Keep only rows with this maturity. `None` requires the file to carry a
    /// single maturity and selects it.
    pub maturity: Option<NaiveDate>,
    /// Keep only rows observed at this timestamp. `None` pools all
    /// timestamps of the selected maturity.
    pub at: Option<NaiveDateTime>,
    /// Underlying ask, used when the file has no strike-0 row.
    pub spot: Option<f64>,
}

impl LoadOptions {
    pub fn with_min_ask_size(min_ask_size: u32) -> Self {
        LoadOptions {
            min_ask_size,
            ..Default::default()
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawRow {
    strike: f64,
    ask: f64,
    ask_size: u32,
    maturity: NaiveDate,
    observed_at: NaiveDateTime,
}

/// Load a quote cross-section from CSV with header
/// `strike,ask,ask_size,maturity,observed_at`.
///
/// Rows failing the ask-size filter or the maturity/timestamp selectors are
/// dropped; duplicate strikes keep the minimum surviving ask (a buyer takes
/// the best offer).
pub fn load_quotes<R: Read>(source: R, opts: &LoadOptions) -> Result<QuoteCurve> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let mut rows: Vec<OptionQuote> = Vec::new();
    for (idx, rec) in reader.deserialize::<RawRow>().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let row = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if !(row.ask > 0.0) || row.strike < 0.0 {
            return Err(Error::Parse {
                line,
                message: format!(
                    "ask must be positive and strike non-negative, got strike={} ask={}",
                    row.strike, row.ask
                ),
            });
        }
        rows.push(OptionQuote {
            strike: row.strike,
            ask: row.ask,
            ask_size: row.ask_size,
            maturity: row.maturity,
            observed_at: row.observed_at,
        });
    }

    let maturity = match opts.maturity {
        Some(m) => m,
        None => {
            let mut mats: Vec<NaiveDate> = rows.iter().map(|r| r.maturity).collect();
            mats.sort();
            mats.dedup();
            match mats.len() {
                0 => return Err(Error::EmptyCurve),
                1 => mats[0],
                n => {
                    return Err(Error::validation(
                        "maturity",
                        format!("file contains {n} maturities; select one"),
                    ))
                }
            }
        }
    };

    let mut best: BTreeMap<u64, (f64, f64)> = BTreeMap::new(); // strike bits -> (strike, ask)
    for r in &rows {
        if r.maturity != maturity {
            continue;
        }
        if let Some(at) = opts.at {
            if r.observed_at != at {
                continue;
            }
        }
        if r.ask_size < opts.min_ask_size {
            continue;
        }
        best.entry(r.strike.to_bits())
            .and_modify(|e| e.1 = e.1.min(r.ask))
            .or_insert((r.strike, r.ask));
    }

    let mut points: Vec<(f64, f64)> = best.into_values().collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));

    if points.is_empty() {
        return Err(Error::EmptyCurve);
    }
    if points.first().map(|p| p.0) != Some(0.0) {
        match opts.spot {
            Some(s) if s > 0.0 => points.insert(0, (0.0, s)),
            Some(s) => return Err(Error::validation("spot", format!("must be positive, got {s}"))),
            None => return Err(Error::MissingNumeraire),
        }
    }

    let (strikes, asks): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
    QuoteCurve::new(strikes, asks, maturity, opts.at, opts.spot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2010, 11, 20).unwrap()
    }

    fn csv_of(rows: &[(f64, f64, u32)]) -> String {
        let mut s = String::from("strike,ask,ask_size,maturity,observed_at\n");
        for (k, a, sz) in rows {
            s.push_str(&format!("{k},{a},{sz},2010-11-20,2010-10-21T12:39:00\n"));
        }
        s
    }

    #[test]
    fn ask_size_filter_drops_thin_quotes() {
        let data = csv_of(&[(0.0, 1365.0, 500), (1100.0, 280.0, 90), (1200.0, 200.0, 150)]);
        let curve =
            load_quotes(data.as_bytes(), &LoadOptions::with_min_ask_size(100)).unwrap();
        assert_eq!(curve.strikes(), &[0.0, 1200.0]);
    }

    #[test]
    fn duplicate_strikes_keep_minimum_ask() {
        let data = csv_of(&[(0.0, 100.0, 500), (50.0, 10.5, 500), (50.0, 10.2, 500)]);
        let curve = load_quotes(data.as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(curve.asks(), &[100.0, 10.2]);
    }

    #[test]
    fn curve_is_sorted_and_validated() {
        let data = csv_of(&[(1700.0, 0.9, 500), (0.0, 1365.0, 500), (1000.0, 378.0, 500)]);
        let curve = load_quotes(data.as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(curve.strikes(), &[0.0, 1000.0, 1700.0]);
        assert_eq!(curve.asks(), &[1365.0, 378.0, 0.9]);
    }

    #[test]
    fn missing_numeraire_is_an_error_unless_spot_given() {
        let data = csv_of(&[(1000.0, 378.0, 500)]);
        let err = load_quotes(data.as_bytes(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingNumeraire));

        let opts = LoadOptions {
            spot: Some(1365.0),
            ..Default::default()
        };
        let curve = load_quotes(data.as_bytes(), &opts).unwrap();
        assert_eq!(curve.spot(), 1365.0);
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let data = "strike,ask,ask_size,maturity,observed_at\n0,1365,500,2010-11-20,2010-10-21T12:39:00\nnot-a-number,1,500,2010-11-20,2010-10-21T12:39:00\n";
        match load_quotes(data.as_bytes(), &LoadOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_after_filter_is_an_error() {
        let data = csv_of(&[(0.0, 1365.0, 10)]);
        let err =
            load_quotes(data.as_bytes(), &LoadOptions::with_min_ask_size(100)).unwrap_err();
        assert!(matches!(err, Error::EmptyCurve));
    }

    #[test]
    fn roundtrip_through_canonical_csv() {
        let data = csv_of(&[(0.0, 1365.25, 500), (1000.0, 378.5, 500), (1028.0, 360.1, 120)]);
        let curve = load_quotes(data.as_bytes(), &LoadOptions::with_min_ask_size(100)).unwrap();
        let again =
            load_quotes(curve.to_csv().as_bytes(), &LoadOptions::with_min_ask_size(100)).unwrap();
        assert_eq!(curve.strikes(), again.strikes());
        assert_eq!(curve.asks(), again.asks());
        assert_eq!(curve.maturity, again.maturity);
    }

    #[test]
    fn mesh_of_equally_spaced_grid_is_the_step() {
        let strikes: Vec<f64> = std::iter::once(0.0)
            .chain((0..25).map(|i| 1000.0 + 28.0 * i as f64))
            .collect();
        let asks = vec![1.0; strikes.len()];
        let curve = QuoteCurve::new(strikes, asks, date(), None, None).unwrap();
        let stats = mesh(&curve, None).unwrap();
        assert_eq!(stats.mesh_all, 28.0);
    }

    #[test]
    fn mesh_is_the_maximum_gap() {
        let curve = QuoteCurve::new(
            vec![0.0, 100.0, 110.0, 130.0],
            vec![100.0, 20.0, 15.0, 11.0],
            date(),
            None,
            None,
        )
        .unwrap();
        assert_eq!(mesh(&curve, None).unwrap().mesh_all, 20.0);
    }

    #[test]
    fn mesh_needs_two_nonzero_strikes() {
        let curve =
            QuoteCurve::new(vec![0.0, 100.0], vec![100.0, 20.0], date(), None, None).unwrap();
        assert!(matches!(
            mesh(&curve, None),
            Err(Error::InsufficientStrikes { .. })
        ));
    }

    #[test]
    fn forward_atm_is_atm() {
        // m exactly 1: strike equal to the forward price.
        let spot = 1365.0;
        let strike = spot * (0.04f64 * 0.25).exp();
        let c = moneyness_class(spot, strike, 0.04, 0.25, &MoneynessEdges::default());
        assert_eq!(c, Moneyness::Atm);
    }

    #[test]
    fn double_spot_is_deep_otm() {
        let c = moneyness_class(100.0, 200.0, 0.04, 1.0, &MoneynessEdges::default());
        assert_eq!(c, Moneyness::DeepOtm);
    }

    #[test]
    fn smile_grid_bucket_counts() {
        // 25 strikes from 1000 step 28 classified with the default edges.
        let mut counts = [0usize; 5];
        for i in 0..25 {
            let k = 1000.0 + 28.0 * i as f64;
            let c = moneyness_class(1365.0, k, 0.04, 0.25, &MoneynessEdges::default());
            counts[Moneyness::ALL.iter().position(|&m| m == c).unwrap()] += 1;
        }
        assert_eq!(counts, [6, 5, 5, 4, 5]);
    }

    proptest! {
        #[test]
        fn moneyness_monotone_in_strike(
            spot in 10.0f64..5000.0,
            rate in 0.0f64..0.1,
            tau in 0.01f64..2.0,
            k1 in 1.0f64..10000.0,
            dk in 0.0f64..5000.0,
        ) {
            let edges = MoneynessEdges::default();
            let a = moneyness_class(spot, k1, rate, tau, &edges);
            let b = moneyness_class(spot, k1 + dk, rate, tau, &edges);
            let rank = |m: Moneyness| Moneyness::ALL.iter().position(|&x| x == m).unwrap();
            prop_assert!(rank(b) >= rank(a));
        }
    }
}
