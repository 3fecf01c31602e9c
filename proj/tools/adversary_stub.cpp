// Test helper speaking the external-adversary line protocol on stdio.
// Modes: const0 (ignore everything, answer 0), parrot (answer challenge
// bit 0), probe (read one all-zero A address, answer that bit), hog
// (query A forever, for query-cap tests).

#include <iostream>
#include <sstream>
#include <string>

namespace {

int ceil_log2(unsigned v) {
  int w = 0;
  while ((1u << w) < v) ++w;
  return w;
}

std::string zero_hex(size_t bits) { return std::string((bits + 3) / 4, '0'); }

struct Hello {
  std::string kind;
  int n = 0;
  int ell = 0;
};

size_t a_address_bits(const Hello& h) {
  if (h.kind == "prf") return size_t(2 * h.n + h.ell + 1);
  return size_t(2 + h.n + ceil_log2(unsigned(3 * h.n)) + h.ell + 1);
}

std::string expect_line(const std::string& verb) {
  std::string line;
  if (!std::getline(std::cin, line)) std::exit(3);
  std::istringstream is(line);
  std::string got;
  is >> got;
  if (got != verb) std::exit(3);
  return line;
}

int ask(const std::string& verb, size_t bits, const std::string& hex) {
  std::cout << verb << ' ' << bits << ' ' << hex << std::endl;
  std::string line = expect_line("BIT");
  std::istringstream is(line);
  std::string v;
  int bit;
  is >> v >> bit;
  return bit;
}

}  // namespace

int main(int argc, char** argv) {
  std::string mode = argc > 1 ? argv[1] : "const0";

  Hello hello;
  {
    std::istringstream is(expect_line("HELLO"));
    std::string verb;
    is >> verb >> hello.kind >> hello.n >> hello.ell;
  }
  size_t chal_bits;
  std::string chal_hex;
  {
    std::istringstream is(expect_line("CHAL"));
    std::string verb;
    is >> verb >> chal_bits >> chal_hex;
  }

  if (mode == "const0") {
    std::cout << "OUT 0" << std::endl;
  } else if (mode == "parrot") {
    int nibble = 0;
    if (!chal_hex.empty()) {
      char c = chal_hex[0];
      nibble = c <= '9' ? c - '0' : (c | 32) - 'a' + 10;
    }
    std::cout << "OUT " << ((nibble >> 3) & 1) << std::endl;
  } else if (mode == "probe") {
    size_t bits = a_address_bits(hello);
    int bit = ask("QA", bits, zero_hex(bits));
    std::cout << "OUT " << bit << std::endl;
  } else if (mode == "hog") {
    size_t bits = a_address_bits(hello);
    for (;;) ask("QA", bits, zero_hex(bits));
  } else {
    return 2;
  }
  return 0;
}
