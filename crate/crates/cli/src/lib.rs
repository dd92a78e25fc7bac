//! Command implementations behind the `d2csg` binary.

pub mod args;
pub mod config;
pub mod eval;
pub mod export;
pub mod fit;
pub mod inspect;
pub mod source;

use args::{Cli, Command};

/// Exit status for an error: 2 for a training abort, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let nan = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<d2csg::Error>(), Some(d2csg::Error::NanLoss { .. })));
    if nan {
        2
    } else {
        1
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Fit(a) => fit::cmd_fit(a),
        Command::Eval(a) => {
            print!("{}", eval::cmd_eval(a)?);
            Ok(())
        }
        Command::Export(a) => {
            let out = export::cmd_export(a)?;
            eprintln!("wrote {}", out.display());
            Ok(())
        }
        Command::Inspect(a) => {
            let report = inspect::inspect(a)?;
            if a.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_text());
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_aborts_map_to_2_even_when_wrapped() {
        let nan = anyhow::Error::new(d2csg::Error::NanLoss { stage: 1, iteration: 7 }).context("fitting x");
        assert_eq!(exit_code(&nan), 2);
        assert_eq!(exit_code(&anyhow::Error::new(d2csg::Error::EmptyReconstruction)), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("bad flag")), 1);
    }
}
