// Regenerates the bundled synthetic datasets under <out>/synthetic.
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "codesum/corpus/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Write the bundled synthetic datasets"};
    std::string out = "data";
    std::uint64_t seed = 2020;
    app.add_option("--out", out, "data directory");
    app.add_option("--seed", seed, "generator seed");
    CLI11_PARSE(app, argc, argv);

    namespace fs = std::filesystem;
    using codesum::write_records;
    const auto b = codesum::synthetic::make_bundle(seed);
    const fs::path root = fs::path(out) / "synthetic";
    for (const char* task : {"copy", "offset", "direction"}) {
        fs::create_directories(root / task);
    }
    write_records(root / "copy/train.jsonl", b.copy_train);
    write_records(root / "copy/valid.jsonl", b.copy_valid);
    write_records(root / "copy/test.jsonl", b.copy_test);
    write_records(root / "offset/train.jsonl", b.offset_train);
    write_records(root / "offset/valid.jsonl", b.offset_valid);
    write_records(root / "offset/test.jsonl", b.offset_test);
    write_records(root / "direction/train.jsonl", b.direction_train);
    write_records(root / "direction/valid.jsonl", b.direction_valid);
    write_records(root / "direction/test.jsonl", b.direction_test);
    write_records(root / "overfit64.jsonl", b.overfit);
    std::cout << "wrote " << root.string() << "\n";
    return 0;
}
