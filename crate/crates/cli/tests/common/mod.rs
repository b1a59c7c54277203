//! Helpers for tests that drive the `lectern` binary.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

use crate::support::bench6_dir;

pub struct Workspace {
    dir: TempDir,
}

impl Workspace {
    pub fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("lectern.toml"), config).unwrap();
        Self { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, contents).unwrap();
        path
    }

    pub fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_lectern"))
            .args(args)
            .current_dir(self.dir.path())
            .env_remove("RUST_LOG")
            .output()
            .unwrap()
    }
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn bench6(name: &str) -> String {
    bench6_dir().join(name).display().to_string()
}

pub fn bench6_config() -> String {
    format!(
        "[defaults]\nbackbone = \"reader\"\nmapper = \"mapper\"\n\n\
         [backends.reader]\nkind = \"scripted\"\nscript = \"{}\"\n\n\
         [backends.mapper]\nkind = \"scripted\"\nscript = \"{}\"\n\n\
         [backends.strict]\nkind = \"scripted\"\nscript = \"{}\"\n",
        bench6("backbone.json"),
        bench6("mapper.json"),
        bench6("mapper-strict.json"),
    )
}

pub fn recorded_config(ws: &Workspace) -> (PathBuf, PathBuf) {
    let record = ws.path("record.toml");
    let replay = ws.path("replay.toml");
    let tape = ws.path("tape.jsonl");
    let map_tape = ws.path("map-tape.jsonl");
    fs::write(
        &record,
        format!(
            "[defaults]\nbackbone = \"rec\"\nmapper = \"rec-map\"\n\n\
             [backends.reader]\nkind = \"scripted\"\nscript = \"{}\"\nmodel = \"gpt-4o\"\n\n\
             [backends.mapper]\nkind = \"scripted\"\nscript = \"{}\"\nmodel = \"gpt-4o-mini\"\n\n\
             [backends.rec]\nkind = \"record\"\ninner = \"reader\"\ncassette = \"{}\"\n\n\
             [backends.rec-map]\nkind = \"record\"\ninner = \"mapper\"\ncassette = \"{}\"\n",
            bench6("backbone.json"),
            bench6("mapper.json"),
            tape.display(),
            map_tape.display()
        ),
    )
    .unwrap();
    fs::write(
        &replay,
        format!(
            "[defaults]\nbackbone = \"tape\"\nmapper = \"map-tape\"\n\n\
             [backends.tape]\nkind = \"replay\"\ncassette = \"{}\"\nmodel = \"gpt-4o\"\n\n\
             [backends.map-tape]\nkind = \"replay\"\ncassette = \"{}\"\nmodel = \"gpt-4o-mini\"\n",
            tape.display(),
            map_tape.display()
        ),
    )
    .unwrap();
    (record, replay)
}

pub fn read_dir_sorted(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read_to_string(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}
