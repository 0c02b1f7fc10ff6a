// Clusters a handful of hand-made importance vectors and prints the chosen
// k, metric and linkage with the resulting labels.

#include "psox/cluster.hpp"

#include <cstdio>

int main()
{
    using namespace psox;
    const std::vector<std::string> names{"sphere", "ellipse", "rastrigin", "rot-rastrigin", "ackley", "griewank"};
    const std::vector<Vector> vectors{
        {0.70, 0.05, 0.10, 0.05}, {0.65, 0.10, 0.10, 0.05}, {0.05, 0.80, 0.05, 0.05},
        {0.10, 0.70, 0.10, 0.05}, {0.05, 0.05, 0.10, 0.75}, {0.05, 0.10, 0.05, 0.70},
    };
    const auto report = grid_search(vectors, names, 2, names.size() - 1);
    std::printf("k=%zu metric=%s linkage=%s silhouette=%.3f\n", report.k, to_string(report.metric).c_str(),
                to_string(report.linkage).c_str(), report.silhouette);
    for (auto leaf : report.dendrogram.leaf_order())
        std::printf("  %-14s cluster %zu\n", names[leaf].c_str(), report.labels[leaf]);
}
