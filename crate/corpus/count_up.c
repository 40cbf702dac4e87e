/*@ requires n >= 0; */
int count_up(int n) {
    int i = 0;
    while (i < n) {
        i = i + 1;
    }
    /*@ assert i == n; */
    return i;
}
