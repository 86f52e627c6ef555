use std::io::IsTerminal;

fn main() {
    let color = std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty()) && std::io::stderr().is_terminal();
    let stdin = std::io::stdin();
    let mut io = parityd_cli::Io {
        stdin: &mut stdin.lock(),
        stdout: &mut std::io::stdout().lock(),
        stderr: &mut std::io::stderr().lock(),
        color,
    };
    let code = parityd_cli::run(std::env::args_os(), &mut io);
    std::process::exit(code);
}
