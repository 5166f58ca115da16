import { defineConfig } from "vitest/config";

// Every test drives a real solver process; give them room to finish.
export default defineConfig({
  test: {
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
