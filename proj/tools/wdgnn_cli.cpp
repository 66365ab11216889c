// placeholder main, replaced by the full experiment runner
int main() { return 1; }
