use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::SimTrace;

/// Render a double with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Io {
        path: "<csv>".into(),
        message: e.to_string(),
    }
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Columns `t, R_<link>…, y_<link>…, x_<route>…`, one row per sample.
pub fn write_trace_csv<W: Write>(trace: &SimTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(trace.link_ids.iter().map(|id| format!("R_{id}")));
    header.extend(trace.link_ids.iter().map(|id| format!("y_{id}")));
    header.extend(trace.route_ids.iter().map(|id| format!("x_{id}")));
    w.write_record(&header).map_err(csv_error)?;
    let mut row = Vec::with_capacity(header.len());
    for (i, &t) in trace.times.iter().enumerate() {
        row.clear();
        row.push(fmt_f64(t));
        for series in trace.rates.iter().chain(&trace.aggregates).chain(&trace.flows) {
            row.push(fmt_f64(series[i]));
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<csv>".into(),
        message: e.to_string(),
    })
}

pub fn trace_csv_string(trace: &SimTrace) -> Result<String> {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_trace_file(trace: &SimTrace, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    write_trace_csv(trace, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinkParams, NetworkModel};
    use crate::sim::{simulate, InitialHistory, SimConfig};

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn trace_columns_and_rows() {
        let m = NetworkModel::single_link(LinkParams::new(1.0, 0.4, 0.0, 1.0).unwrap(), &[1.0, 2.0]).unwrap();
        let cfg = SimConfig::defaults_for(&m, InitialHistory::Constant(vec![0.3])).unwrap();
        let trace = simulate(&m, &cfg).unwrap();
        let text = trace_csv_string(&trace).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,R_l0,y_l0,x_r0,x_r1"));
        assert_eq!(lines.count(), trace.len());
        let last: Vec<f64> = text
            .lines()
            .last()
            .unwrap()
            .split(',')
            .map(|c| c.parse().unwrap())
            .collect();
        assert_eq!(last[1], *trace.rates[0].last().unwrap());
        assert_eq!(last[2], *trace.aggregates[0].last().unwrap());
    }
}
