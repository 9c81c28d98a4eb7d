#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#ifdef __GLIBC__
#include <malloc.h>
#endif

int main(int argc, char** argv) {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  doctest::Context context(argc, argv);
  return context.run();
}
