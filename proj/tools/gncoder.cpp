#include "gncoder/cli.hpp"

int main(int argc, char **argv)
{
    return gncoder::cli::run(argc, argv);
}
