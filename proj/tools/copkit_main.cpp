#include "copkit/harness.hpp"

int main(int argc, char** argv) {
    return copkit::cli_main(argc, argv);
}
