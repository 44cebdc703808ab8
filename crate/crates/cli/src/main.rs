mod config;
mod run;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;
use serde_json::json;

use config::{parse_config, Cli, Format, RunConfig};
use run::{execute, Section};

const EXIT_FAIL: u8 = 1;
const EXIT_ERROR: u8 = 2;

#[derive(Serialize)]
struct TaskRecord {
    name: String,
    status: &'static str,
    seconds: f64,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    toolkit: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    status: &'static str,
    exit_code: Option<u8>,
    tasks: Vec<TaskRecord>,
    error: Option<String>,
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), String> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| e.to_string())?;
    fs::write(dir.join("manifest.json"), text + "\n").map_err(|e| format!("cannot write manifest: {e}"))
}

fn render(cfg: &RunConfig, sections: &[Section]) -> String {
    match cfg.format {
        Format::Text => sections.iter().map(|s| s.text.as_str()).collect(),
        Format::Delimited => {
            let mut out = String::new();
            let uniform = sections.windows(2).all(|w| w[0].header == w[1].header);
            for (k, s) in sections.iter().enumerate() {
                if k == 0 || !uniform {
                    if k > 0 {
                        out.push('\n');
                    }
                    out.push_str(&s.header.join(","));
                    out.push('\n');
                }
                for row in &s.rows {
                    let cells: Vec<String> = row.iter().map(|c| csv_cell(c)).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
            }
            out
        }
        Format::Structured => {
            let value = json!({
                "command": cfg.command.name(),
                "passed": sections.iter().all(|s| s.passed),
                "sections": sections.iter().map(|s| json!({
                    "name": s.name,
                    "passed": s.passed,
                    "quality_flag": s.quality_flag,
                    "warnings": s.warnings,
                    "result": s.json,
                })).collect::<Vec<_>>(),
            });
            serde_json::to_string_pretty(&value).unwrap_or_default() + "\n"
        }
    }
}

fn csv_cell(c: &str) -> String {
    if c.contains([',', '"', '\n']) {
        format!("\"{}\"", c.replace('"', "\"\""))
    } else {
        c.to_string()
    }
}

fn run(cfg: &RunConfig) -> u8 {
    let dir = &cfg.output_dir;
    if let Err(e) = fs::create_dir_all(dir) {
        eprintln!("error: cannot create output directory '{}': {e}", dir.display());
        return EXIT_ERROR;
    }
    let mut manifest = RunManifest {
        toolkit: "homogen",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        status: "running",
        exit_code: None,
        tasks: Vec::new(),
        error: None,
    };
    if let Err(e) = write_manifest(dir, &manifest) {
        eprintln!("error: {e}");
        return EXIT_ERROR;
    }

    let (code, sections) = match execute(cfg) {
        Ok((sections, extra)) => {
            let failed = sections.iter().any(|s| !s.passed || s.quality_flag);
            let mut code = if failed { EXIT_FAIL } else { 0 };
            let body = render(cfg, &sections);
            print!("{body}");
            let result = dir.join(format!("result.{}", cfg.format.extension()));
            if let Err(e) = fs::write(&result, body) {
                manifest.error = Some(format!("cannot write '{}': {e}", result.display()));
                code = EXIT_ERROR;
            }
            if let Some(field) = extra {
                if let Err(e) = fs::write(dir.join("field.txt"), field) {
                    manifest.error = Some(format!("cannot write field: {e}"));
                    code = EXIT_ERROR;
                }
            }
            for s in &sections {
                for w in &s.warnings {
                    eprintln!("warning: {w}");
                }
            }
            (code, sections)
        }
        Err(e) => {
            manifest.error = Some(e);
            (EXIT_ERROR, Vec::new())
        }
    };

    manifest.tasks = sections
        .iter()
        .map(|s| TaskRecord {
            name: s.name.clone(),
            status: if !s.passed {
                "fail"
            } else if s.quality_flag {
                "quality-flag"
            } else {
                "pass"
            },
            seconds: s.seconds,
            warnings: s.warnings.clone(),
        })
        .collect();
    manifest.status = match code {
        0 => "pass",
        EXIT_FAIL => "fail",
        _ => "error",
    };
    manifest.exit_code = Some(code);
    if let Some(e) = &manifest.error {
        eprintln!("error: {e}");
    }
    if let Err(e) = write_manifest(dir, &manifest) {
        eprintln!("error: {e}");
        return EXIT_ERROR;
    }
    code
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match parse_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    ExitCode::from(run(&cfg))
}
