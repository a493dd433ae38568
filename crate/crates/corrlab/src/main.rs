fn main() {
    println!("corrlab");
}
