#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qwzmem/orchestrator.hpp"

namespace {

void report(const qwzmem::Error& e) {
    std::cerr << "qwzmem: error: " << e.what() << "\n";
    if (!e.hint().empty()) std::cerr << "  hint: " << e.hint() << "\n";
    if (const auto* g = dynamic_cast<const qwzmem::GaugeSingularity*>(&e))
        std::cerr << "  nodes: " << g->nodes().size() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-band quench simulator and vortex memory analyzer"};
    app.set_version_flag("--version", std::string(qwzmem::library_version));

    std::string command, config_path, probe, out, branch, gauge, observable;
    double m_initial = 0, m_quench = 0, dt = 0, t_max = 0, delay = 0, disk_radius = 0,
           vortex_radius = 0;
    int n_side = 0;
    std::uint64_t seed = 0;
    std::vector<double> times, masses;

    app.add_option("command", command,
                   "phase-diagram | quench | scan-period | coincidence | decode | export-field");
    app.add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    auto* o_mi = app.add_option("--m-initial", m_initial, "initial mass m");
    auto* o_mq = app.add_option("--m-quench", m_quench, "quench mass m'");
    auto* o_n = app.add_option("--n-side", n_side, "grid points per direction (even, >= 4)");
    auto* o_dt = app.add_option("--dt", dt, "time step");
    auto* o_tmax = app.add_option("--t-max", t_max, "final time");
    auto* o_delay = app.add_option("--delay", delay, "quench delay tau");
    auto* o_probe = app.add_option("--probe", probe, "pi-pi | zero-zero | kx,ky");
    auto* o_out = app.add_option("--out", out, "output directory");
    auto* o_time = app.add_option("--time", times, "snapshot time(s) for export-field");
    auto* o_mass = app.add_option("--masses", masses, "mass list for phase-diagram / scan-period")
                       ->delimiter(',');
    auto* o_branch = app.add_option("--branch", branch, "decode branch: above | below | none | joint");
    auto* o_gauge = app.add_option("--gauge", gauge, "initial gauge: A | B | patched");
    auto* o_obs = app.add_option("--observable", observable, "vortex observable: texture | connection");
    auto* o_disk = app.add_option("--disk-radius", disk_radius, "Chern patch disk radius");
    auto* o_vr = app.add_option("--vortex-radius", vortex_radius, "vortex loop radius (0: one spacing)");
    auto* o_seed = app.add_option("--seed", seed, "recorded in the manifest");

    CLI11_PARSE(app, argc, argv);

    try {
        qwzmem::RunConfig cfg =
            config_path.empty() ? qwzmem::RunConfig{} : qwzmem::load_config(config_path);
        if (!command.empty())
            cfg.command = qwzmem::parse_command(command);
        else if (config_path.empty())
            throw qwzmem::ConfigError("no command given", "pass a command or --config");
        if (o_mi->count()) cfg.m_initial = m_initial;
        if (o_mq->count()) cfg.m_quench = m_quench;
        if (o_n->count()) cfg.n_side = n_side;
        if (o_dt->count()) cfg.dt = dt;
        if (o_tmax->count()) cfg.t_max = t_max;
        if (o_delay->count()) cfg.quench_delay = delay;
        if (o_probe->count()) cfg.probe = qwzmem::parse_probe(probe);
        if (o_out->count()) cfg.output_dir = out;
        if (o_time->count()) cfg.times = times;
        if (o_mass->count()) cfg.masses = masses;
        if (o_branch->count()) cfg.branch = branch;
        if (o_gauge->count()) cfg.initial_gauge = qwzmem::detail::parse_gauge(gauge);
        if (o_obs->count()) cfg.observable = qwzmem::detail::parse_observable(observable);
        if (o_disk->count()) cfg.disk_radius = disk_radius;
        if (o_vr->count()) cfg.vortex_radius = vortex_radius;
        if (o_seed->count()) cfg.seed = seed;

        const qwzmem::RunManifest m = qwzmem::run(cfg);
        for (const auto& w : m.warnings) std::cerr << "qwzmem: warning: " << w << "\n";
        std::cout << "wrote " << m.files.size() + 1 << " file(s) to " << cfg.output_dir.string()
                  << "\n";
        if (!m.summary.empty()) std::cout << m.summary.dump(2) << "\n";
        return 0;
    } catch (const qwzmem::Error& e) {
        report(e);
        return qwzmem::exit_code(e.error_class());
    } catch (const std::invalid_argument& e) {
        std::cerr << "qwzmem: error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "qwzmem: error: " << e.what() << "\n";
        return 1;
    }
}
