use std::path::Path;
use std::process::Command;

fn structex() -> Command {
    Command::new(env!("CARGO_BIN_EXE_structex"))
}

fn write(dir: &Path, name: &str, text: &str) {
    let path = dir.join(name);
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
}

#[test]
fn convert_exit_codes_follow_status() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("clean", "\\documentclass{article}\\begin{document}Hello.\\end{document}", 0),
        ("warn", "\\documentclass{article}\\usepackage{tikz}\\begin{document}Hello.\\end{document}", 0),
        ("broken", "\\documentclass{article}\\begin{document}Text $x\\end{document}", 1),
        ("empty", "\\documentclass{article}\\begin{document}\\end{document}", 2),
    ];
    for (name, src, code) in cases {
        write(dir.path(), &format!("{name}/main.tex"), src);
        let out = structex()
            .args(["convert"])
            .arg(dir.path().join(name))
            .arg("--out-dir")
            .arg(dir.path().join("out"))
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(code), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(dir.path().join("out").join(format!("{name}.html")).exists(), code != 2, "{name}");
    }
    write(dir.path(), "nothing/readme.txt", "no tex");
    let out = structex().arg("convert").arg(dir.path().join("nothing")).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn convert_copies_assets_and_dumps_ast() {
    let dir = tempfile::tempdir().unwrap();
    let src = "\\documentclass{article}\\usepackage{graphicx}\\begin{document}\
\\begin{figure}\\includegraphics[alt={A plot}]{figs/plot}\\caption{Plot}\\end{figure}\\end{document}";
    write(dir.path(), "paper/main.tex", src);
    write(dir.path(), "paper/figs/plot.png", "png");
    let out_dir = dir.path().join("site");
    let out = structex()
        .arg("convert")
        .arg(dir.path().join("paper/main.tex"))
        .args(["--paper-id", "2401.00001", "--dump-ast", "--out-dir"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let html = std::fs::read_to_string(out_dir.join("2401.00001.html")).unwrap();
    assert!(html.contains("data-paper-id=\"2401.00001\""));
    assert!(html.contains("figs/plot.png"));
    assert!(out_dir.join("figs/plot.png").exists());
    let ast: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("2401.00001.ast.json")).unwrap()).unwrap();
    assert!(ast.is_object());
}

#[test]
fn batch_then_plan() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    write(&corpus, "a/main.tex", "\\documentclass{article}\\usepackage{tikz}\\begin{document}A\\end{document}");
    write(&corpus, "b/main.tex", "\\documentclass{article}\\begin{document}B\\end{document}");
    let report = dir.path().join("report.json");
    let out = structex()
        .arg("batch")
        .arg(&corpus)
        .args(["--jobs", "2", "--cost-per-article", "0.015", "--out"])
        .arg(&report)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["total"], 2);
    assert_eq!(json["costEstimate"], "0.03");
    assert!(corpus.join("a/a.html").exists());

    let out = structex()
        .args(["plan", "--previous"])
        .arg(&report)
        .args(["--changed-packages", "tikz"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "a\n");
}
