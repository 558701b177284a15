//! Gnuplot scripts for the CSV tables.

use std::fmt::Write as _;

use crate::experiments::Experiment;
use crate::ExperimentConfig;

fn words<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

/// Script that plots `<name>.csv` from the directory it is run in.
pub fn gnuplot_script(exp: Experiment, cfg: &ExperimentConfig) -> String {
    let data = exp.csv_name();
    let channels = words(&cfg.channels_list);
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output '{}.png'", exp.name());
    let _ = writeln!(s, "set grid");
    let _ = writeln!(s, "set key outside right");
    match exp {
        Experiment::SensingCurves => {
            let _ = writeln!(s, "set xlabel 'threshold gamma (W)'");
            let _ = writeln!(s, "set ylabel 'probability'");
            let _ = writeln!(s, "durations = '{}'", words(&cfg.sensing_durations));
            let _ = writeln!(
                s,
                "plot for [n in durations] '{data}' every ::1 using 1:($2 == n ? $4 : 1/0) with lines title 'Pd, N='.n, \\\n     for [n in durations] '{data}' every ::1 using 1:($2 == n ? $3 : 1/0) with lines dashtype 2 title 'Pf, N='.n"
            );
        }
        Experiment::ScenarioProbs => {
            let _ = writeln!(s, "set xlabel 'Pd'");
            let _ = writeln!(s, "set ylabel 'scenario probability'");
            let _ = writeln!(s, "channels = '{channels}'");
            let _ = writeln!(
                s,
                "plot for [m in channels] for [j=1:4] '{data}' every ::1 using 1:($3 == m ? column(3 + j) : 1/0) with lines title sprintf('S%d, M=%s', j, m)"
            );
        }
        Experiment::EffcapVsPd => {
            let _ = writeln!(s, "set xlabel 'Pd'");
            let _ = writeln!(s, "set ylabel 'effective capacity (bits/s/Hz)'");
            let _ = writeln!(s, "channels = '{channels}'");
            let _ = writeln!(s, "limits = '{}'", words(&cfg.iavg_db_list));
            let _ = writeln!(
                s,
                "plot for [d in limits] for [m in channels] '{data}' every ::1 using 1:($3 == m && $4 == d ? $5 : 1/0) with linespoints title 'M='.m.', Iavg='.d.' dB'"
            );
        }
        Experiment::EffcapVsIavg => {
            let _ = writeln!(s, "set xlabel 'Iavg (dB)'");
            let _ = writeln!(s, "set ylabel 'effective capacity (bits/s/Hz)'");
            let _ = writeln!(s, "channels = '{channels}'");
            let _ = writeln!(
                s,
                "plot for [m in channels] '{data}' every ::1 using 1:($2 == m ? $3 : 1/0) with linespoints title 'M='.m"
            );
        }
        Experiment::PintCurves => {
            let _ = writeln!(s, "set xlabel 'Pd'");
            let _ = writeln!(s, "set ylabel 'Pint'");
            let _ = writeln!(s, "channels = '{channels}'");
            let _ = writeln!(
                s,
                "plot for [m in channels] '{data}' every ::1 using 1:($3 == m ? $4 : 1/0) with lines title 'M='.m"
            );
        }
    }
    s
}
