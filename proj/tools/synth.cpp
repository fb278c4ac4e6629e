// Writes a synthetic dataset directory (one CSV per series) plus the pivots
// of the injected deviation, for demos and fixtures.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "pivotreg/correction.hpp"
#include "pivotreg/error.hpp"
#include "pivotreg/ingest.hpp"
#include "pivotreg/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Generate a synthetic price dataset with a known expert deviation", "pivotreg_synth"};
    pivotreg::SyntheticSpec spec;
    std::string out;
    app.add_option("--out", out, "Output directory")->required();
    app.add_option("--days", spec.n_days, "Number of daily points")->check(CLI::Range(10, 100000));
    app.add_option("--seed", spec.seed, "Random seed");
    app.add_option("--amplitude", spec.pivot_amplitude, "Deviation amplitude in log space");
    app.add_option("--pivots", spec.n_pivots, "Number of deviation pivots")->check(CLI::Range(2, 1000));
    app.add_option("--outliers", spec.outlier_fraction, "Fraction of rows shifted by +10 in log space")
        ->check(CLI::Range(0.0, 1.0));
    CLI11_PARSE(app, argc, argv);

    try {
        const auto data = pivotreg::make_synthetic(spec);
        std::filesystem::create_directories(out);
        for (const auto& [name, values] : data.dataset.columns) {
            std::vector<pivotreg::Point> pts;
            for (std::size_t i = 0; i < values.size(); ++i) pts.push_back({data.dataset.dates[i], values[i]});
            pivotreg::write_series(std::filesystem::path(out) / (name + ".csv"), pivotreg::TimeSeries(name, pts));
        }
        if (!data.oracle_pivots.empty()) {
            pivotreg::write_pivots(std::filesystem::path(out) / "pivots.json", data.oracle_pivots);
        }
        std::cout << "wrote " << data.dataset.columns.size() << " series to " << out << "\n";
    } catch (const pivotreg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
