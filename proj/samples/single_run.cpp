// Runs one configuration on one benchmark row and prints the error trajectory.
//   single_run [token] [function] [dimension] [budget-multiplier]

#include "psox/runner.hpp"

#include <cstdio>

int main(int argc, char** argv)
{
    using namespace psox;
    try {
        const auto config = argc > 1 ? ModuleConfiguration::parse(argv[1]) : canonical_configuration();
        const auto fn = bench::parse_function_id(argc > 2 ? argv[2] : "f10");
        const std::size_t dim = argc > 3 ? parse_u64(argv[3]) : 10;
        const std::size_t mult = argc > 4 ? parse_u64(argv[4]) : 5000;
        const auto problem = bench::make_problem({fn, dim, 1, std::nullopt});
        const auto result = run(config, problem, mult * dim, run_seed(0, config, problem.spec(), 0));
        std::printf("%s\n%s D=%zu, %zu evaluations, %zu iterations\n", config.token().c_str(),
                    bench::to_string(fn).c_str(), dim, result.evaluations, result.iterations);
        for (std::size_t i = 0; i < result.trajectory.size(); ++i)
            std::printf("%8zu  %.6g\n", (i + 1) * trajectory_interval, result.trajectory[i]);
        std::printf("final error %.6g (target %.4f)\n", result.final_error, capped_log_error(result.final_error));
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    }
}
