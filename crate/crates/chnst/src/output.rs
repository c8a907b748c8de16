//! CSV serialisation of diagnostics and convergence tables.
//!
//! Floats use Rust's shortest round-trip exponent form, so rereading a cell
//! gives back the identical `f64`.

use std::io::{self, Write};

use chnst_core::diagnostics::DiagnosticsRecord;
use chnst_core::harness::ConvergenceTable;

pub const DIAGNOSTICS_HEADER: &str = "step,time,mass,kinetic,internal,total_energy,entropy,tau_Dphys,Dnum_residual,Dnum_graddiv,Dnum_pressure,newton_iters,residual";

pub const CONVERGENCE_HEADER: &str =
    "k,h,e_a,eoc_a,e_b,eoc_b,e_mu,eoc_mu,e_u,eoc_u,e_theta,eoc_theta";

pub fn write_diagnostics_header<W: Write>(w: &mut W) -> io::Result<()> {
    writeln!(w, "{DIAGNOSTICS_HEADER}")
}

pub fn write_diagnostics_row<W: Write>(w: &mut W, r: &DiagnosticsRecord) -> io::Result<()> {
    writeln!(
        w,
        "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{:e}",
        r.step,
        r.time,
        r.mass,
        r.kinetic,
        r.internal,
        r.total_energy,
        r.entropy,
        r.tau_dphys,
        r.dnum_residual,
        r.dnum_graddiv,
        r.dnum_pressure,
        r.newton_iters,
        r.residual
    )
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_convergence<W: Write>(w: &mut W, table: &ConvergenceTable) -> io::Result<()> {
    writeln!(w, "{CONVERGENCE_HEADER}")?;
    for row in &table.rows {
        let e = &row.errors;
        let o = &row.eoc;
        writeln!(
            w,
            "{},{:e},{:e},{},{:e},{},{:e},{},{:e},{},{:e},{}",
            row.level,
            row.h,
            e.e_a,
            opt(o[0]),
            e.e_b,
            opt(o[1]),
            e.e_mu,
            opt(o[2]),
            e.e_u,
            opt(o[3]),
            e.e_theta,
            opt(o[4])
        )?;
    }
    Ok(())
}

/// Human-readable table in the layout of the convergence CSV.
pub fn format_convergence(table: &ConvergenceTable) -> String {
    let mut s = format!(
        "{:>2} {:>9} {:>10} {:>5} {:>10} {:>5} {:>10} {:>5} {:>10} {:>5} {:>10} {:>5}\n",
        "k", "h", "e_a", "eoc", "e_b", "eoc", "e_mu", "eoc", "e_u", "eoc", "e_theta", "eoc"
    );
    for row in &table.rows {
        let e = &row.errors;
        let o = |i: usize| {
            row.eoc[i]
                .map(|x| format!("{x:.2}"))
                .unwrap_or_else(|| "-".into())
        };
        s.push_str(&format!(
            "{:>2} {:>9.3e} {:>10.3e} {:>5} {:>10.3e} {:>5} {:>10.3e} {:>5} {:>10.3e} {:>5} {:>10.3e} {:>5}\n",
            row.level,
            row.h,
            e.e_a,
            o(0),
            e.e_b,
            o(1),
            e.e_mu,
            o(2),
            e.e_u,
            o(3),
            e.e_theta,
            o(4)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use chnst_core::fem::ErrorNorms;
    use chnst_core::harness::ConvergenceRow;

    #[test]
    fn diagnostics_round_trip() {
        let r = DiagnosticsRecord {
            step: 7,
            time: 7e-3,
            mass: 0.4000000000000001,
            kinetic: 1.0 / 3.0,
            internal: 1.2345678901234567,
            total_energy: core::f64::consts::PI,
            entropy: -0.0,
            tau_dphys: 1e-300,
            dnum_residual: -2.5e-17,
            dnum_graddiv: 0.0,
            dnum_pressure: f64::MIN_POSITIVE,
            newton_iters: 3,
            residual: 9.87e-14,
            damping_events: 0,
        };
        let mut buf = Vec::new();
        write_diagnostics_row(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cells: Vec<&str> = text.trim_end().split(',').collect();
        assert_eq!(cells.len(), DIAGNOSTICS_HEADER.split(',').count());
        let f: Vec<f64> = cells.iter().map(|c| c.parse().unwrap()).collect();
        assert_eq!(f[2].to_bits(), r.mass.to_bits());
        assert_eq!(f[3].to_bits(), r.kinetic.to_bits());
        assert_eq!(f[4].to_bits(), r.internal.to_bits());
        assert_eq!(f[5].to_bits(), r.total_energy.to_bits());
        assert_eq!(f[8].to_bits(), r.dnum_residual.to_bits());
        assert_eq!(f[10].to_bits(), r.dnum_pressure.to_bits());
        assert_eq!(f[11], 3.0);
    }

    #[test]
    fn first_convergence_row_has_empty_orders() {
        let e = ErrorNorms {
            e_a: 0.3,
            e_b: 0.2,
            e_mu: 0.1,
            e_u: 0.05,
            e_theta: 0.01,
        };
        let table = ConvergenceTable {
            rows: vec![
                ConvergenceRow {
                    level: 2,
                    h: 0.25,
                    errors: e,
                    eoc: [None; 5],
                },
                ConvergenceRow {
                    level: 3,
                    h: 0.125,
                    errors: e,
                    eoc: [Some(2.0), Some(1.5), None, None, None],
                },
            ],
        };
        let mut buf = Vec::new();
        write_convergence(&mut buf, &table).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CONVERGENCE_HEADER);
        assert_eq!(lines[1], "2,2.5e-1,3e-1,,2e-1,,1e-1,,5e-2,,1e-2,");
        assert_eq!(lines[2], "3,1.25e-1,3e-1,2e0,2e-1,1.5e0,1e-1,,5e-2,,1e-2,");
        assert!(format_convergence(&table).contains("2.00"));
    }
}
