/**
 * Source fixtures with hand-computed function_count / has_helper values.
 * max_depth expectations live in ../goldens.json (frozen from the probe's
 * own first run; depth is a probe-defined measure).
 */

export interface Fixture {
  name: string;
  source: string;
  functionCount: number;
  hasHelper: boolean;
}

export const FIXTURES: Fixture[] = [
  { name: "empty", source: "", functionCount: 0, hasHelper: false },
  { name: "single_statement", source: "print(1)\n", functionCount: 0, hasHelper: false },
  {
    name: "one_function",
    source: "def a():\n    return 1\n",
    functionCount: 1,
    hasHelper: false,
  },
  {
    name: "nested_function",
    source: "def outer():\n    def inner():\n        return 2\n    return inner()\n",
    functionCount: 2,
    hasHelper: true,
  },
  {
    name: "two_top_level",
    source: "def a():\n    return 1\n\ndef b():\n    return a() + 1\n",
    functionCount: 2,
    hasHelper: true,
  },
  {
    name: "class_with_methods",
    source:
      "class Solver:\n" +
      "    def read(self):\n" +
      "        return input()\n" +
      "    def run(self):\n" +
      "        return self.read()\n",
    functionCount: 2,
    hasHelper: true,
  },
  {
    name: "lambda_only",
    source: "f = lambda x: x + 1\nprint(f(1))\n",
    functionCount: 0,
    hasHelper: false,
  },
  {
    name: "async_and_sync",
    source: "async def main():\n    pass\n\ndef helper():\n    pass\n",
    functionCount: 2,
    hasHelper: true,
  },
  {
    name: "deep_expression",
    source: "x = [[i * j for i in range(3)] for j in range(3)]\nprint(x)\n",
    functionCount: 0,
    hasHelper: false,
  },
  {
    name: "solve_style",
    source:
      "import sys\n" +
      "def solve():\n" +
      "    data = sys.stdin.read().split()\n" +
      "    total = 0\n" +
      "    for token in data:\n" +
      "        total += int(token)\n" +
      "    print(total)\n" +
      "solve()\n",
    functionCount: 1,
    hasHelper: false,
  },
];

export const INVALID_SOURCE = "def broken(:\n    pass\n";
